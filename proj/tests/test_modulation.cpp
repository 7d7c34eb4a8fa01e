#include <doctest.h>

#include <cmath>
#include <map>

#include "test_support.hpp"
#include "triplane/grad_check.hpp"
#include "triplane/model.hpp"
#include "triplane/ops.hpp"

using namespace triplane;
using triplane::testing::max_rel_diff;
using triplane::testing::random_tensor;

namespace {

using T32 = Tensor<float>;
using T64 = Tensor<double>;

ModelConfig small_hybrid(PEMode mode, bool branch, std::size_t d = 5) {
  ModelConfig c = ModelConfig::defaults(Variant::hybrid);
  c.dims = {d, d, d};
  c.feature_channels = 4;
  c.plane_hidden = {4};
  c.pe.mode = mode;
  c.pe.model_dim = 8;
  c.pe.heads = 2;
  c.pe.layers = 1;
  c.pe.max_positions = 16;
  c.pe.frequencies = 2;
  c.pe.mlp_hidden = 4;
  c.branch.enabled = branch;
  c.branch.hidden = {3};
  c.seed = 11;
  return c;
}

template <typename Real>
void randomize(Tensor<Real>& t, std::uint64_t seed, double bound) {
  auto r = random_tensor<Real>(t.shape(), seed, -bound, bound);
  auto d = t.mutable_data();
  std::copy(r.data().begin(), r.data().end(), d.begin());
}

/// Copies every parameter whose name exists in `src` into `dst`.
template <typename Real>
std::size_t copy_shared(TriPlaneModel<Real>& src, TriPlaneModel<Real>& dst) {
  std::map<std::string, Tensor<Real>> by_name;
  for (auto& [n, t] : src.parameters()) by_name.emplace(n, t);
  std::size_t copied = 0;
  dst.visit([&](const std::string& n, Tensor<Real>& t) {
    auto it = by_name.find(n);
    if (it == by_name.end()) return;
    auto d = t.mutable_data();
    std::copy(it->second.data().begin(), it->second.data().end(), d.begin());
    ++copied;
  });
  return copied;
}

}  // namespace

TEST_SUITE("summarize_tokens") {
  TEST_CASE("constant volume") {
    auto t = summarize_tokens(VoxelGrid<float>(T32::full({2, 3, 4, 5}, 0.25f)));
    CHECK(t[0].shape() == Shape{3, 2});
    CHECK(t[1].shape() == Shape{4, 2});
    CHECK(t[2].shape() == Shape{5, 2});
    for (const auto& a : t)
      for (float v : a.data()) CHECK(v == 0.25f);
  }

  TEST_CASE("2x2x2 values 1..8") {
    auto t = summarize_tokens(VoxelGrid<float>(T32::from({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8})));
    CHECK(t[0].at({0, 0}) == doctest::Approx(2.5));
    CHECK(t[0].at({1, 0}) == doctest::Approx(6.5));
    CHECK(t[1].at({0, 0}) == doctest::Approx(3.5));
    CHECK(t[2].at({1, 0}) == doctest::Approx(5.0));
  }

  TEST_CASE("token means equal the global mean") {
    auto v = random_tensor<double>({1, 3, 4, 6}, 1);
    double g = 0;
    for (double x : v.data()) g += x;
    g /= double(v.numel());
    for (const auto& a : summarize_tokens(VoxelGrid<double>(v))) {
      double m = 0;
      for (double x : a.data()) m += x;
      CHECK(m / double(a.numel()) == doctest::Approx(g).epsilon(1e-12));
    }
  }
}

TEST_SUITE("variant encodings") {
  TEST_CASE("sinusoidal features at coordinate zero") {
    auto f = sinusoidal_features<double>(5, 3);
    CHECK(f.shape() == Shape{5, 6});
    for (std::size_t q = 0; q < 3; ++q) {
      CHECK(f.at({0, 2 * q}) == 0.0);
      CHECK(f.at({0, 2 * q + 1}) == 1.0);
    }
    // u = 1 at the last row: sin(pi 2^q) ~ 0, cos(pi) = -1 at q = 0
    CHECK(f.at({4, 1}) == doctest::Approx(-1.0));
  }

  TEST_CASE("coordconv channels on a 4-long axis") {
    auto v = append_coord_channels(VoxelGrid<float>(T32::zeros({1, 4, 2, 3})));
    CHECK(v.channels() == 4);
    const float expect[] = {0.f, 1.f / 3.f, 2.f / 3.f, 1.f};
    for (std::size_t i = 0; i < 4; ++i) CHECK(v.data.at({1, i, 1, 2}) == doctest::Approx(expect[i]));
    CHECK(v.data.at({3, 0, 0, 2}) == doctest::Approx(1.0));
    CHECK(v.data.at({2, 3, 1, 0}) == doctest::Approx(1.0));
  }

  TEST_CASE("mode none produces no weights") {
    Initializer init(0);
    PositionalModulation<float> pe(small_hybrid(PEMode::none, false), init);
    CHECK_FALSE(pe.produces_weights());
    auto e = pe.embed(VoxelGrid<float>(T32::zeros({1, 5, 5, 5})));
    CHECK_FALSE(e.pre[0].defined());
  }

  TEST_CASE("zero heads give zero embeddings in every weighted mode") {
    for (PEMode m : {PEMode::transformer, PEMode::sinusoidal, PEMode::mlp}) {
      Initializer init(1);
      PositionalModulation<float> pe(small_hybrid(m, false), init);
      auto e = pe.embed(VoxelGrid<float>(random_tensor<float>({1, 5, 5, 5}, 2)));
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(e.pre[k].shape() == Shape{1, 5});
        CHECK(e.post[k].shape() == Shape{4, 5});
        for (float x : e.pre[k].data()) CHECK(x == 0.f);
        for (float x : e.post[k].data()) CHECK(x == 0.f);
      }
    }
  }
}

TEST_SUITE("transformer encoder") {
  TEST_CASE("attention rows sum to one") {
    Initializer init(3);
    PEConfig cfg;
    cfg.model_dim = 16;
    cfg.heads = 4;
    TransformerEncoder<double> enc(1, cfg, init);
    auto v = random_tensor<double>({1, 4, 5, 6}, 4);
    std::vector<T64> att;
    enc.forward(summarize_tokens(VoxelGrid<double>(v)), &att);
    CHECK(att.size() == cfg.layers * cfg.heads);
    for (const auto& a : att) {
      CHECK(a.shape() == Shape{15, 15});
      for (std::size_t i = 0; i < 15; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 15; ++j) s += a.at({i, j});
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("identical tokens swap without changing the output") {
    Initializer init(5);
    PEConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.position_embedding = false;
    TransformerEncoder<double> enc(1, cfg, init);
    AxisTokens<double> tok{T64::from({4, 1}, {0.3, 0.7, 0.3, -0.2}), T64::from({3, 1}, {0.1, 0.5, 0.9}),
                           T64::from({2, 1}, {-0.4, 0.4})};
    auto a = enc.forward(tok);
    for (std::size_t c = 0; c < 8; ++c) CHECK(a[0].at({0, c}) == doctest::Approx(a[0].at({2, c})).epsilon(1e-12));
    // Permuting the whole x sequence permutes its outputs and leaves y, z unchanged.
    AxisTokens<double> perm = tok;
    perm[0] = T64::from({4, 1}, {-0.2, 0.3, 0.7, 0.3});
    auto b = enc.forward(perm);
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(b[0].at({0, c}) == doctest::Approx(a[0].at({3, c})).epsilon(1e-12));
      CHECK(b[0].at({2, c}) == doctest::Approx(a[0].at({1, c})).epsilon(1e-12));
      CHECK(b[1].at({1, c}) == doctest::Approx(a[1].at({1, c})).epsilon(1e-12));
    }
  }

  TEST_CASE("sequence longer than max_positions") {
    Initializer init(6);
    PEConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.max_positions = 4;
    TransformerEncoder<float> enc(1, cfg, init);
    AxisTokens<float> tok{T32::zeros({5, 1}), T32::zeros({3, 1}), T32::zeros({3, 1})};
    CHECK_THROWS_AS(enc.forward(tok), ShapeError);
  }

  TEST_CASE("model_dim must divide by heads") {
    Initializer init(7);
    PEConfig cfg;
    cfg.model_dim = 10;
    cfg.heads = 4;
    CHECK_THROWS_AS(TransformerEncoder<float>(1, cfg, init), ConfigError);
  }
}

TEST_SUITE("weight volume") {
  TEST_CASE("zero profiles") {
    AxisProfiles<float> e{T32::zeros({2, 3}), T32::zeros({2, 4}), T32::zeros({2, 5})};
    for (float x : build_weight_volume(e, {3, 4, 5}).data()) CHECK(x == 0.f);
  }

  TEST_CASE("slab from a single x profile") {
    AxisProfiles<float> e{T32::from({1, 2}, {1.f, 0.f}), T32::zeros({1, 2}), T32::zeros({1, 2})};
    auto w = build_weight_volume(e, {2, 2, 2});
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(w.at({0, 0, j, k}) == 1.f);
        CHECK(w.at({0, 1, j, k}) == 0.f);
      }
  }

  TEST_CASE("summation identity and separability") {
    const Dims d{3, 4, 5};
    AxisProfiles<double> e{random_tensor<double>({2, 3}, 8), random_tensor<double>({2, 4}, 9),
                           random_tensor<double>({2, 5}, 10)};
    auto w = build_weight_volume(e, d);
    double total = 0;
    for (double x : w.data()) total += x;
    double expect = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0;
      for (double x : e[k].data()) s += x;
      expect += s * double(d[0] * d[1] * d[2] / d[k]);
    }
    CHECK(total == doctest::Approx(expect).epsilon(1e-12));
    // Slices along x differ by a constant offset.
    for (std::size_t c = 0; c < 2; ++c) {
      const double off = w.at({c, 1, 0, 0}) - w.at({c, 0, 0, 0});
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 5; ++k)
          CHECK(w.at({c, 1, j, k}) - w.at({c, 0, j, k}) == doctest::Approx(off).epsilon(1e-12));
    }
  }

  TEST_CASE("profile shape mismatch") {
    AxisProfiles<float> e{T32::zeros({1, 3}), T32::zeros({1, 4}), T32::zeros({1, 4})};
    CHECK_THROWS_AS(build_weight_volume(e, {3, 4, 5}), ShapeError);
  }
}

TEST_SUITE("modulation") {
  TEST_CASE("zero volume is the identity") {
    auto v = random_tensor<float>({1, 3, 3, 3}, 11);
    CHECK(pre_modulate(VoxelGrid<float>(v), T32::zeros({1, 3, 3, 3})).data.to_vector() == v.to_vector());
    CHECK(post_modulate(v, T32::zeros({1, 3, 3, 3})).to_vector() == v.to_vector());
  }

  TEST_CASE("subtracting the same volume recovers the input") {
    std::vector<float> a(27), b(27);
    for (std::size_t i = 0; i < 27; ++i) {
      a[i] = float(int(i) - 13) * 0.125f;
      b[i] = float(int(i * 7 % 11) - 5) * 0.25f;
    }
    auto v = T32::from({1, 3, 3, 3}, std::span<const float>(a));
    auto w = T32::from({1, 3, 3, 3}, std::span<const float>(b));
    CHECK(sub(post_modulate(v, w), w).to_vector() == v.to_vector());
  }

  TEST_CASE("gradient of sum(T') with respect to W is all ones") {
    auto t = random_tensor<double>({2, 2, 2, 2}, 12);
    auto w = random_tensor<double>({2, 2, 2, 2}, 13);
    w.set_requires_grad(true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(post_modulate(t, w)));
    for (double g : w.grad()) CHECK(g == 1.0);
  }

  TEST_CASE("shape mismatch") {
    CHECK_THROWS_AS(post_modulate(T32::zeros({1, 2, 2, 2}), T32::zeros({2, 2, 2, 2})), ShapeError);
    CHECK_THROWS_AS(pre_modulate(VoxelGrid<float>(T32::zeros({1, 2, 2, 2})), T32::zeros({1, 2, 2, 3})),
                    ShapeError);
  }
}

TEST_SUITE("downsample and upsample") {
  TEST_CASE("ratio one is the identity") {
    auto v = random_tensor<float>({1, 4, 5, 6}, 14);
    CHECK(downsample(VoxelGrid<float>(v), 1.0).data.to_vector() == v.to_vector());
  }

  TEST_CASE("constant volume stays constant") {
    for (double r : {0.5, 0.25, 0.3, 0.7}) {
      auto out = downsample(VoxelGrid<float>(T32::full({1, 8, 8, 8}, 0.5f)), r);
      CHECK(out.dims()[0] == downsampled_length(8, r));
      for (float x : out.data.data()) CHECK(x == doctest::Approx(0.5));
    }
  }

  TEST_CASE("block mean of the corner block") {
    auto v = random_tensor<double>({1, 4, 4, 4}, 15);
    auto out = downsample(VoxelGrid<double>(v), 0.5);
    CHECK(out.dims() == Dims{2, 2, 2});
    double m = 0;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) m += v.at({0, i, j, k});
    CHECK(out.data.at({0, 0, 0, 0}) == doctest::Approx(m / 8).epsilon(1e-12));
  }

  TEST_CASE("target lengths and invalid ratios") {
    CHECK(downsampled_length(32, 0.5) == 16);
    CHECK(downsampled_length(5, 0.5) == 3);
    CHECK(downsampled_length(10, 0.3) == 3);
    CHECK(integral_block_factor(0.25) == 4);
    CHECK(integral_block_factor(0.3) == 0);
    CHECK_THROWS_AS(downsampled_length(8, 0.0), ConfigError);
    CHECK_THROWS_AS(downsampled_length(8, 1.5), ConfigError);
  }

  TEST_CASE("upsampling keeps constants and affine fields") {
    for (float x : upsample_to(T32::full({2, 2, 3, 2}, 3.f), {4, 6, 4}).data()) CHECK(x == doctest::Approx(3.0));
    // Half-pixel linear interpolation with linear extrapolation is exact on affine fields.
    std::vector<double> a(3 * 4 * 2);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 2; ++k) a[(i * 4 + j) * 2 + k] = 1.0 + 2.0 * i - 0.5 * j + 3.0 * k;
    auto up = upsample_to(T64::from({1, 3, 4, 2}, std::span<const double>(a)), {6, 8, 4});
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t k = 0; k < 4; ++k) {
          const double si = (i + 0.5) / 2 - 0.5, sj = (j + 0.5) / 2 - 0.5, sk = (k + 0.5) / 2 - 0.5;
          CHECK(up.at({0, i, j, k}) == doctest::Approx(1.0 + 2.0 * si - 0.5 * sj + 3.0 * sk).epsilon(1e-12));
        }
  }

  TEST_CASE("pointwise interpolation oracle") {
    auto g = random_tensor<double>({2, 3, 2, 4}, 16);
    auto up = upsample_to(g, {5, 7, 9});
    auto expect = triplane::testing::trilinear_oracle(g.to_vector(), 2, {3, 2, 4}, {5, 7, 9});
    CHECK(max_rel_diff(up.to_vector(), expect) < 1e-12);
  }
}

TEST_SUITE("volume branch and fusion") {
  TEST_CASE("identity kernel encoder") {
    Initializer init(17);
    VolumeBranch<float> b(0.5, {1, 1}, init);
    auto w = b.h.weights[0].mutable_data();
    std::fill(w.begin(), w.end(), 0.f);
    w[13] = 1.f;
    auto v = random_tensor<float>({1, 3, 3, 3}, 18);
    CHECK(b.encode(VoxelGrid<float>(v)).to_vector() == v.to_vector());
  }

  TEST_CASE("zero input and zero bias") {
    Initializer init(19);
    VolumeBranch<float> b(0.5, {1, 8, 8, 4}, init);
    auto g = b.forward(VoxelGrid<float>(T32::zeros({1, 6, 6, 6})));
    CHECK(g.shape() == Shape{4, 6, 6, 6});
    for (float x : g.data()) CHECK(x == 0.f);
  }

  TEST_CASE("single conv layer matches the convolution oracle on 3^3") {
    Initializer init(20);
    VolumeBranch<double> b(0.5, {2, 3}, init);
    randomize(b.h.biases[0], 21, 0.5);
    auto v = random_tensor<double>({2, 3, 3, 3}, 22);
    std::array<std::size_t, 3> od{};
    auto expect = triplane::testing::conv_oracle(v.to_vector(), b.h.weights[0].to_vector(),
                                                 b.h.biases[0].to_vector(),
                                                 {2, 3, 3, 3, 3, 3, 3, 3, 1, 1, 1}, od);
    CHECK(max_rel_diff(b.encode(VoxelGrid<double>(v)).to_vector(), expect) < 1e-12);
  }

  TEST_CASE("identity mixer sums the streams") {
    Mixer<float> phi;
    CHECK(phi.identity());
    auto t = random_tensor<float>({2, 3, 3, 3}, 23), g = random_tensor<float>({2, 3, 3, 3}, 24);
    CHECK(fuse(t, g, phi).to_vector() == add(t, g).to_vector());
    CHECK(fuse(t, T32::zeros({2, 3, 3, 3}), phi).to_vector() == t.to_vector());
    CHECK(fuse(t, T32{}, phi).to_vector() == t.to_vector());
  }

  TEST_CASE("single 1x1x1 identity layer") {
    Initializer init(25);
    Mixer<float> phi({2, 2}, init);
    auto w = phi.weights[0].mutable_data();
    std::fill(w.begin(), w.end(), 0.f);
    w[0] = w[3] = 1.f;
    auto t = random_tensor<float>({2, 3, 3, 3}, 26), g = random_tensor<float>({2, 3, 3, 3}, 27);
    CHECK(max_rel_diff(fuse(t, g, phi).to_vector(), add(t, g).to_vector()) < 1e-7);
  }

  TEST_CASE("identity fusion is linear in both streams") {
    Mixer<double> phi;
    auto t1 = random_tensor<double>({1, 2, 2, 2}, 28), t2 = random_tensor<double>({1, 2, 2, 2}, 29);
    auto g1 = random_tensor<double>({1, 2, 2, 2}, 30), g2 = random_tensor<double>({1, 2, 2, 2}, 31);
    auto lhs = fuse(add(scale(t1, 2.0), t2), add(scale(g1, 2.0), g2), phi);
    auto rhs = add(scale(fuse(t1, g1, phi), 2.0), fuse(t2, g2, phi));
    CHECK(max_rel_diff(lhs.to_vector(), rhs.to_vector()) < 1e-14);
  }

  TEST_CASE("shape mismatch") {
    Mixer<float> phi;
    CHECK_THROWS_AS(fuse(T32::zeros({1, 2, 2, 2}), T32::zeros({1, 2, 2, 3}), phi), ShapeError);
  }

  TEST_CASE("finite differences through fuse on 4^3") {
    Initializer init(32);
    Mixer<double> phi({3, 3, 2}, init);
    auto g = random_tensor<double>({3, 4, 4, 4}, 33);
    auto w = random_tensor<double>({2, 4, 4, 4}, 34);
    CHECK(grad_check([&](const T64& t) { return sum(mul(fuse(t, g, phi), w)); },
                     random_tensor<double>({3, 4, 4, 4}, 35))
              .passed);
    CHECK(grad_check([&](const T64& x) { return sum(mul(fuse(g, x, phi), w)); },
                     random_tensor<double>({3, 4, 4, 4}, 36))
              .passed);
  }
}

TEST_SUITE("hybrid model") {
  TEST_CASE("PE none, branch off and identity mixer reduce to the backbone") {
    ModelConfig h = small_hybrid(PEMode::none, false);
    h.mixer_layers = 0;
    ModelConfig b = h;
    b.variant = Variant::backbone;
    TriPlaneModel<float> mh(h), mb(b);
    auto v = VoxelGrid<float>(random_tensor<float>({1, 5, 5, 5}, 40, 0.0, 1.0));
    const auto yh = mh.forward(v);
    CHECK(yh.to_vector() == mb.forward(v).to_vector());
    CHECK(yh.to_vector() == backbone_forward(v, mh.backbone()).to_vector());
  }

  TEST_CASE("zero-initialised heads make PE on equal PE off bitwise") {
    for (PEMode m : {PEMode::transformer, PEMode::sinusoidal, PEMode::mlp}) {
      for (bool branch : {false, true}) {
        TriPlaneModel<float> on(small_hybrid(m, branch)), off(small_hybrid(PEMode::none, branch));
        CHECK(copy_shared(off, on) > 0);
        auto v = VoxelGrid<float>(random_tensor<float>({1, 5, 5, 5}, 41, 0.0, 1.0));
        CHECK(on.forward(v).to_vector() == off.forward(v).to_vector());
      }
    }
  }

  TEST_CASE("zero input and zero biases give zero logits") {
    for (Variant var : {Variant::backbone, Variant::hybrid, Variant::dense3d}) {
      ModelConfig c = ModelConfig::defaults(var);
      c.dims = {8, 8, 8};
      TriPlaneModel<float> m(c);
      for (float x : m.logits(VoxelGrid<float>(T32::zeros({1, 8, 8, 8}))).data()) CHECK(x == 0.f);
    }
  }

  TEST_CASE("concurrent streams give the same output") {
    TriPlaneModel<float> m(small_hybrid(PEMode::transformer, true, 8));
    auto v = VoxelGrid<float>(random_tensor<float>({1, 8, 8, 8}, 42, 0.0, 1.0));
    const auto a = m.forward(v).to_vector();
    m.set_concurrent_streams(true);
    CHECK(m.forward(v).to_vector() == a);
  }

  TEST_CASE("classification head shape") {
    ModelConfig c = small_hybrid(PEMode::transformer, true);
    c.task = TaskKind::classify;
    TriPlaneModel<float> m(c);
    CHECK(m.logits(VoxelGrid<float>(random_tensor<float>({1, 5, 5, 5}, 43))).shape() == Shape{4});
  }

  TEST_CASE("wrong input channels") {
    TriPlaneModel<float> m(small_hybrid(PEMode::none, false));
    CHECK_THROWS_AS(m.forward(VoxelGrid<float>(T32::zeros({2, 5, 5, 5}))), ShapeError);
  }

  TEST_CASE("same seed gives identical parameters") {
    TriPlaneModel<float> a(small_hybrid(PEMode::transformer, true)), b(small_hybrid(PEMode::transformer, true));
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].first == pb[i].first);
      CHECK(pa[i].second.to_vector() == pb[i].second.to_vector());
    }
  }

  TEST_CASE("end-to-end finite differences on 5^3 for every PE mode") {
    for (PEMode m : {PEMode::none, PEMode::sinusoidal, PEMode::coordconv, PEMode::mlp, PEMode::transformer}) {
      CAPTURE(to_string(m));
      TriPlaneModel<double> model(small_hybrid(m, true));
      std::uint64_t seed = 100;
      // Non-zero heads so the modulation path carries gradient.
      model.visit([&](const std::string& name, T64& t) {
        if (name.find("head") != std::string::npos || name.find("pre_") != std::string::npos ||
            name.find("post_") != std::string::npos)
          randomize(t, seed++, 0.3);
      });
      auto w = random_tensor<double>({1, 5, 5, 5}, 44);
      GradCheckOptions opt;
      opt.max_entries = 40;
      auto r = grad_check(
          [&](const T64& x) { return sum(mul(model.forward(VoxelGrid<double>(x)), w)); },
          random_tensor<double>({1, 5, 5, 5}, 45, 0.0, 1.0), opt);
      CHECK(r.passed);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}
