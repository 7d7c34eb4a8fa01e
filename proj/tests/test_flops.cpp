#include <doctest.h>

#include "test_support.hpp"
#include "triplane/flops.hpp"
#include "triplane/model.hpp"
#include "triplane/ops.hpp"

using namespace triplane;
using triplane::testing::random_tensor;

namespace {

std::uint64_t instrumented(const ModelConfig& c, const Dims& d) {
  TriPlaneModel<float> m(c);
  auto v = VoxelGrid<float>(random_tensor<float>({c.in_channels, d[0], d[1], d[2]}, 1, 0.0, 1.0));
  FlopCounter counter;
  m.logits(v);
  return counter.total();
}

ModelConfig hybrid(PEMode mode, double ratio, TaskKind task = TaskKind::complete) {
  ModelConfig c = ModelConfig::defaults(Variant::hybrid);
  c.pe.mode = mode;
  c.branch.ratio = ratio;
  c.task = task;
  return c;
}

}  // namespace

TEST_SUITE("counting rules") {
  TEST_CASE("convolution hand counts") {
    // 2 * Cin * Cout * K^2 * H * W + Cout * H * W
    CHECK(count_conv2d(1, 16, 3, 32, 32) == 2ull * 16 * 9 * 1024 + 16 * 1024);
    CHECK(count_conv2d(4, 4, 1, 2, 3, false) == 2ull * 16 * 6);
    CHECK(count_conv3d(8, 16, 3, 4, 4, 4) == 2ull * 8 * 16 * 27 * 64 + 16 * 64);
  }

  TEST_CASE("matmul and linear") {
    CHECK(count_matmul(3, 4, 5) == 120);
    CHECK(count_linear(10, 4, 6) == 2 * 10 * 4 * 6 + 10 * 6);
    CHECK(count_linear(10, 4, 6, false) == 480);
  }

  TEST_CASE("instrumented op counters follow the same rules") {
    auto x = random_tensor<float>({3, 8, 8}, 2);
    auto w = random_tensor<float>({5, 3, 3, 3}, 3);
    auto b = random_tensor<float>({5}, 4);
    FlopCounter c;
    conv2d(x, w, b, 1, 1);
    CHECK(c.total() == count_conv2d(3, 5, 3, 8, 8));
    auto p = random_tensor<float>({6, 4}, 5), q = random_tensor<float>({4, 7}, 6);
    FlopCounter c2;
    matmul(p, q);
    CHECK(c2.total() == count_matmul(6, 4, 7));
  }

  TEST_CASE("attention sublayer count") {
    const std::size_t L = 12, d = 8, h = 2, dh = 4;
    const std::uint64_t expect = 4 * count_linear(L, d, d) + h * (count_matmul(L, dh, L) + L * L /*scale*/ +
                                                                 4 * L * L /*softmax*/ + count_matmul(L, L, dh));
    CHECK(count_attention(L, d, h) == expect);
  }
}

TEST_SUITE("model counts") {
  TEST_CASE("analytic totals equal the instrumented counter") {
    const Dims d{9, 7, 8};
    std::vector<ModelConfig> configs{ModelConfig::defaults(Variant::backbone),
                                     ModelConfig::defaults(Variant::dense3d)};
    for (PEMode m : {PEMode::none, PEMode::sinusoidal, PEMode::coordconv, PEMode::mlp, PEMode::transformer})
      configs.push_back(hybrid(m, 0.5));
    configs.push_back(hybrid(PEMode::transformer, 0.25));
    configs.push_back(hybrid(PEMode::transformer, 0.3));
    configs.push_back(hybrid(PEMode::transformer, 1.0, TaskKind::classify));
    auto cls = ModelConfig::defaults(Variant::backbone);
    cls.task = TaskKind::classify;
    configs.push_back(cls);
    for (auto c : configs) {
      c.dims = d;
      CAPTURE(to_json(c).dump());
      const auto r = count_model(c, d);
      const auto got = instrumented(c, d);
      CHECK(got == r.total);
    }
  }

  TEST_CASE("stage totals add up") {
    const auto r = count_model(ModelConfig::defaults(Variant::hybrid), {32, 32, 32});
    std::uint64_t s = 0;
    for (const auto& st : r.stages) s += st.flops;
    CHECK(s == r.total);
    CHECK(r.stages.size() == 13);
    CHECK(r.pe_flops() == r.stage("pe_tokens") + r.stage("pe_encoder") + r.stage("pe_heads") +
                               r.stage("pe_weight_volume") + r.stage("pe_modulation"));
    CHECK_THROWS(r.stage("nope"));
  }

  TEST_CASE("plane encoders quadruple and dense octuples from 32 to 64") {
    const auto b32 = count_model(ModelConfig::defaults(Variant::backbone), {32, 32, 32});
    const auto b64 = count_model(ModelConfig::defaults(Variant::backbone), {64, 64, 64});
    CHECK(double(b64.stage("plane_encoders")) / double(b32.stage("plane_encoders")) ==
          doctest::Approx(4.0).epsilon(0.1));
    const auto d32 = count_model(ModelConfig::defaults(Variant::dense3d), {32, 32, 32});
    const auto d64 = count_model(ModelConfig::defaults(Variant::dense3d), {64, 64, 64});
    CHECK(double(d64.total) / double(d32.total) == doctest::Approx(8.0).epsilon(0.1));
  }

  TEST_CASE("cost ordering for D >= 32") {
    for (std::size_t D : {32, 64, 128}) {
      const Dims d{D, D, D};
      const auto b = count_model(ModelConfig::defaults(Variant::backbone), d).total;
      const auto q = count_model(hybrid(PEMode::transformer, 0.25), d).total;
      const auto h = count_model(hybrid(PEMode::transformer, 0.5), d).total;
      const auto x = count_model(ModelConfig::defaults(Variant::dense3d), d).total;
      CHECK(b < q);
      CHECK(q < h);
      CHECK(h < x);
    }
  }

  TEST_CASE("2D stream over dense ratio falls as 1/D") {
    const auto ratio = [](std::size_t D) {
      const Dims d{D, D, D};
      return double(count_model(ModelConfig::defaults(Variant::backbone), d).stage("plane_encoders")) /
             double(count_model(ModelConfig::defaults(Variant::dense3d), d).total);
    };
    CHECK(ratio(32) / ratio(64) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(ratio(64) / ratio(128) == doctest::Approx(2.0).epsilon(0.1));
    const auto total_ratio = [](std::size_t D) {
      const Dims d{D, D, D};
      return double(count_model(ModelConfig::defaults(Variant::backbone), d).total) /
             double(count_model(ModelConfig::defaults(Variant::dense3d), d).total);
    };
    CHECK(total_ratio(64) < total_ratio(32));
    CHECK(total_ratio(128) < total_ratio(64));
  }
}

TEST_SUITE("compare") {
  TEST_CASE("identical configs give ratio one") {
    auto c = ModelConfig::defaults(Variant::hybrid);
    auto cmp = compare({{"a", c}, {"b", c}}, {16, 16, 16});
    CHECK(cmp.ratio[0][1] == 1.0);
    CHECK(cmp.ratio[1][0] == 1.0);
  }

  TEST_CASE("reports sorted ascending with reciprocal ratios") {
    auto cmp = compare({{"dense", ModelConfig::defaults(Variant::dense3d)},
                        {"hybrid", ModelConfig::defaults(Variant::hybrid)},
                        {"backbone", ModelConfig::defaults(Variant::backbone)}},
                       {32, 32, 32});
    CHECK(cmp.reports[0].label == "backbone");
    CHECK(cmp.reports[2].label == "dense");
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(cmp.ratio[i][j] * cmp.ratio[j][i] == doctest::Approx(1.0));
    CHECK(cmp.to_json()["reports"].size() == 3);
    CHECK_FALSE(cmp.to_table().empty());
  }
}
