#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

#include "triplane/error.hpp"
#include "triplane/metrics.hpp"
#include "triplane/shapes.hpp"
#include "triplane/train.hpp"

using namespace triplane;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("triplane_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<float> grid_with(std::size_t n, std::initializer_list<std::size_t> on) {
  std::vector<float> g(n, 0.f);
  for (auto i : on) g[i] = 1.f;
  return g;
}

ModelConfig tiny(Variant v, TaskKind task, std::size_t d = 16) {
  ModelConfig c = ModelConfig::defaults(v);
  c.task = task;
  c.dims = {d, d, d};
  c.feature_channels = 8;
  c.plane_hidden = {8};
  if (v == Variant::hybrid) {
    c.pe.model_dim = 16;
    c.pe.layers = 1;
    c.branch.hidden = {4};
  }
  return c;
}

}  // namespace

TEST_SUITE("gen_shapes") {
  TEST_CASE("same seed gives an identical dataset") {
    DatasetSpec s{TaskKind::complete, 6, {16, 16, 16}, 5, 0.4};
    auto a = gen_shapes(s), b = gen_shapes(s);
    REQUIRE(a.samples.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a.samples[i].input == b.samples[i].input);
      CHECK(a.samples[i].target == b.samples[i].target);
      CHECK(a.samples[i].label == b.samples[i].label);
    }
    s.seed = 6;
    CHECK_FALSE(gen_shapes(s).samples[0].target == a.samples[0].target);
  }

  TEST_CASE("balanced classes, value range and minimum occupancy") {
    auto d = gen_shapes({TaskKind::classify, 12, {16, 16, 16}, 1, 0.4});
    std::array<int, 4> hist{};
    for (const auto& s : d.samples) {
      ++hist[std::size_t(s.label)];
      CHECK(s.input == s.target);
      for (float v : s.input.values) CHECK((v >= 0.f && v <= 1.f));
      CHECK(double(s.input.occupied()) >= 0.01 * double(s.input.numel()));
    }
    for (int h : hist) CHECK(h == 3);
  }

  TEST_CASE("sphere volume follows the analytic formula") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto p = random_shape(ShapeClass::sphere, seed, {32, 32, 32});
      auto g = rasterize(p, {32, 32, 32});
      const double expect = 4.0 / 3.0 * std::numbers::pi * std::pow(p.size, 3);
      CHECK(double(g.occupied()) == doctest::Approx(expect).epsilon(0.1));
    }
  }

  TEST_CASE("degenerate specs") {
    CHECK_THROWS_AS(gen_shapes({TaskKind::complete, 4, {8, 16, 16}, 0, 0.4}), ConfigError);
    CHECK_THROWS_AS(gen_shapes({TaskKind::complete, 0, {16, 16, 16}, 0, 0.4}), ConfigError);
  }

  TEST_CASE("dataset directory round trip") {
    auto d = gen_shapes({TaskKind::complete, 3, {16, 16, 16}, 2, 0.4});
    const auto dir = scratch("dataset");
    save_dataset(d, dir.string());
    auto e = load_dataset(dir.string());
    CHECK(e.spec.count == 3);
    CHECK(e.spec.task == TaskKind::complete);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(e.samples[i].input == d.samples[i].input);
      CHECK(e.samples[i].target == d.samples[i].target);
      CHECK(e.samples[i].label == d.samples[i].label);
    }
    CHECK_THROWS_AS(load_dataset((dir / "missing").string()), IoError);
  }
}

TEST_SUITE("occlude") {
  TEST_CASE("small fraction is nearly the identity") {
    auto g = rasterize(random_shape(ShapeClass::box, 3, {32, 32, 32}), {32, 32, 32});
    auto o = occlude(g, 1e-6, 1);
    CHECK(o == g);
  }

  TEST_CASE("occluded voxels are a subset of the target") {
    auto g = rasterize(random_shape(ShapeClass::torus, 4, {32, 32, 32}), {32, 32, 32});
    auto o = occlude(g, 0.4, 2);
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK((o.values[i] == 0.f || o.values[i] == g.values[i]));
  }

  TEST_CASE("removed occupied count matches the fraction") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      auto g = rasterize(random_shape(ShapeClass(seed % 4), seed, {32, 32, 32}), {32, 32, 32});
      for (double f : {0.2, 0.4, 0.6}) {
        auto o = occlude(g, f, seed);
        const double removed = double(g.occupied() - o.occupied()) / double(g.occupied());
        CHECK(std::abs(removed - f) <= 0.05);
      }
    }
  }

  TEST_CASE("deterministic per seed") {
    auto g = rasterize(random_shape(ShapeClass::cone, 5, {32, 32, 32}), {32, 32, 32});
    CHECK(occlude(g, 0.4, 9) == occlude(g, 0.4, 9));
  }

  TEST_CASE("invalid fractions") {
    Grid g{{16, 16, 16}, std::vector<float>(4096, 1.f)};
    CHECK_THROWS_AS(occlude(g, 0.0, 0), ConfigError);
    CHECK_THROWS_AS(occlude(g, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(occlude(g, std::nan(""), 0), ConfigError);
  }
}

TEST_SUITE("metrics") {
  const std::array<std::size_t, 3> dims{4, 4, 4};

  TEST_CASE("identical sets") {
    auto a = grid_with(64, {0, 5, 17, 63});
    auto m = metric_suite(a, a, dims);
    CHECK(m.iou == 1.0);
    CHECK(m.f_score == 1.0);
    CHECK(m.chamfer_l2 == 0.0);
  }

  TEST_CASE("disjoint sets") {
    auto a = grid_with(64, {0, 1}), b = grid_with(64, {10, 11});
    CHECK(iou(a, b) == 0.0);
    CHECK(f_score(a, b) == 0.0);
  }

  TEST_CASE("two-point chamfer") {
    // (0,0,0) and (1,0,0): index (i * 4 + j) * 4 + k
    auto a = grid_with(64, {0}), b = grid_with(64, {16});
    CHECK(chamfer_l2(a, b, dims) == 1.0);
  }

  TEST_CASE("hand-computed partial overlap") {
    auto a = grid_with(64, {0, 1, 2}), b = grid_with(64, {1, 2, 3, 4});
    CHECK(iou(a, b) == doctest::Approx(2.0 / 5.0));
    // precision 2/3, recall 1/2
    CHECK(f_score(a, b) == doctest::Approx(2.0 * (2.0 / 3.0) * 0.5 / (2.0 / 3.0 + 0.5)));
  }

  TEST_CASE("symmetry") {
    auto a = grid_with(64, {0, 7, 9, 30}), b = grid_with(64, {7, 8, 40});
    CHECK(iou(a, b) == iou(b, a));
    CHECK(f_score(a, b) == doctest::Approx(f_score(b, a)));
    CHECK(chamfer_l2(a, b, dims) == doctest::Approx(chamfer_l2(b, a, dims)));
  }

  TEST_CASE("empty sets") {
    std::vector<float> e(64, 0.f);
    auto a = grid_with(64, {3});
    CHECK(iou(e, e) == 1.0);
    CHECK(f_score(e, e) == 1.0);
    CHECK_THROWS_AS(chamfer_l2(e, a, dims), NumericError);
    CHECK_THROWS_AS(chamfer_l2(e, e, dims), NumericError);
    CHECK(std::isnan(metric_suite(e, a, dims).chamfer_l2));
  }

  TEST_CASE("threshold is 0.5") {
    std::vector<float> a(64, 0.f), b(64, 0.f);
    a[0] = 0.51f;
    b[0] = 1.f;
    b[1] = 0.5f;
    CHECK(iou(a, b) == 1.0);
  }

  TEST_CASE("accuracy and accumulator") {
    CHECK(accuracy({0, 1, 2, 3}, {0, 1, 0, 3}) == 0.75);
    CHECK_THROWS(accuracy({0}, {0, 1}));
    MetricAccumulator acc;
    MetricSet m1, m2;
    m1.iou = 0.5;
    m1.chamfer_l2 = 2.0;
    m2.iou = 1.0;
    acc.add(m1);
    acc.add(m2);
    auto mean = acc.mean();
    CHECK(mean.iou == 0.75);
    CHECK(mean.chamfer_l2 == 2.0);
    CHECK(acc.undefined_chamfer == 1);
    CHECK(std::isnan(mean.accuracy));
  }
}

TEST_SUITE("training") {
  TEST_CASE("single-sample overfit") {
    auto data = gen_shapes({TaskKind::classify, 1, {16, 16, 16}, 3, 0.4});
    TriPlaneModel<float> model(tiny(Variant::backbone, TaskKind::classify));
    TrainConfig cfg;
    cfg.lr = 3e-3;
    std::vector<Tensor<float>> params;
    for (auto& [n, t] : model.parameters()) params.push_back(t);
    Adam opt(params, cfg);
    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
      losses.push_back(train_step(model, opt, {&data.samples[0]}));
      if (losses.back() < 0.05) break;
    }
    CHECK(losses.back() < 0.05);
    CHECK(losses.back() < losses.front());
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto data = gen_shapes({TaskKind::complete, 2, {16, 16, 16}, 4, 0.4});
    TriPlaneModel<float> model(tiny(Variant::hybrid, TaskKind::complete));
    std::vector<std::vector<float>> before;
    for (auto& [n, t] : model.parameters()) before.push_back(t.to_vector());
    TrainConfig cfg;
    cfg.lr = 0.0;
    std::vector<Tensor<float>> params;
    for (auto& [n, t] : model.parameters()) params.push_back(t);
    Adam opt(params, cfg);
    train_step(model, opt, {&data.samples[0], &data.samples[1]});
    std::size_t i = 0;
    for (auto& [n, t] : model.parameters()) CHECK(t.to_vector() == before[i++]);
  }

  TEST_CASE("two runs with the same seed give identical logs") {
    auto data = gen_shapes({TaskKind::complete, 10, {16, 16, 16}, 5, 0.4});
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.val_fraction = 0.2;
    cfg.seed = 3;
    auto a = train(tiny(Variant::hybrid, TaskKind::complete), data, cfg);
    auto b = train(tiny(Variant::hybrid, TaskKind::complete), data, cfg);
    CHECK(a.log == b.log);
    CHECK(a.val_indices == b.val_indices);
    CHECK(a.val_indices.size() == 2);
    CHECK(a.best_score == b.best_score);
  }

  TEST_CASE("non-finite loss aborts") {
    auto data = gen_shapes({TaskKind::complete, 1, {16, 16, 16}, 6, 0.4});
    data.samples[0].input.values[100] = std::numeric_limits<float>::quiet_NaN();
    TriPlaneModel<float> model(tiny(Variant::backbone, TaskKind::complete));
    std::vector<Tensor<float>> params;
    for (auto& [n, t] : model.parameters()) params.push_back(t);
    Adam opt(params, TrainConfig{});
    CHECK_THROWS_AS(train_step(model, opt, {&data.samples[0]}), NumericError);
  }

  TEST_CASE("train config validation and JSON") {
    TrainConfig c;
    c.epochs = 7;
    c.lr = 2e-3;
    CHECK(train_config_from_json(to_json(c)) == c);
    auto j = to_json(c);
    j["bogus"] = 1;
    CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_SUITE("checkpoints and logs") {
  TEST_CASE("checkpoint round trip restores the model output") {
    const auto dir = scratch("ckpt");
    auto cfg = tiny(Variant::hybrid, TaskKind::complete);
    TriPlaneModel<float> a(cfg);
    for (auto& [n, t] : a.parameters()) {
      auto d = t.mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += 0.001f * float(i % 7);
    }
    save_checkpoint(make_checkpoint(a, 3), (dir / "c.json").string());
    auto c = load_checkpoint((dir / "c.json").string());
    CHECK(c.epoch == 3);
    CHECK(c.config == cfg);
    TriPlaneModel<float> b(c.config);
    load_into(b, c);
    auto data = gen_shapes({TaskKind::complete, 1, {16, 16, 16}, 7, 0.4});
    auto v = VoxelGrid<float>(grid_tensor(data.samples[0].input));
    CHECK(a.forward(v).to_vector() == b.forward(v).to_vector());
    CHECK_THROWS_AS(load_checkpoint((dir / "none.json").string()), IoError);
  }

  TEST_CASE("metrics CSV round trip") {
    const auto dir = scratch("csv");
    std::vector<MetricRow> rows{{0, "train", "loss", 0.125}, {0, "val", "iou", 0.5}, {-1, "test", "f_score", 0.75}};
    write_metrics_csv(rows, (dir / "m.csv").string());
    CHECK(read_metrics_csv((dir / "m.csv").string()) == rows);
  }
}
