#pragma once

// Helpers and independent reference implementations used by the tests. The
// oracles here deliberately use plain nested loops and never call into the
// tensor engine's kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "triplane/tensor.hpp"

namespace triplane::testing {

template <typename Real>
Tensor<Real> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                           double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor<Real>::from(shape, std::span<const Real>(v));
}

/// max_i |a_i - b_i| / max(|b_i|, 1)
template <typename A, typename B>
double max_rel_diff(const A& a, const B& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = static_cast<double>(a[i]);
    const double db = static_cast<double>(b[i]);
    worst = std::max(worst, std::abs(da - db) / std::max(std::abs(db), 1.0));
  }
  return worst;
}

inline std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                         std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

/// Direct 3D cross-correlation with zero padding. Shapes: x [cin][d][h][w],
/// w [cout][cin][kd][kh][kw]. 2D is the kd = 1, d = 1, pad_d = 0 case.
struct ConvOracleSpec {
  std::size_t cin, cout, d, h, w, kd, kh, kw, stride, pad_d, pad_hw;
};

inline std::vector<double> conv_oracle(const std::vector<double>& x, const std::vector<double>& w,
                                       const std::vector<double>& bias, const ConvOracleSpec& s,
                                       std::array<std::size_t, 3>& out_dims) {
  const std::size_t od = (s.d + 2 * s.pad_d - s.kd) / s.stride + 1;
  const std::size_t oh = (s.h + 2 * s.pad_hw - s.kh) / s.stride + 1;
  const std::size_t ow = (s.w + 2 * s.pad_hw - s.kw) / s.stride + 1;
  out_dims = {od, oh, ow};
  std::vector<double> out(s.cout * od * oh * ow, 0.0);
  for (std::size_t co = 0; co < s.cout; ++co)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < s.cin; ++ci)
            for (std::size_t a = 0; a < s.kd; ++a)
              for (std::size_t b = 0; b < s.kh; ++b)
                for (std::size_t c = 0; c < s.kw; ++c) {
                  const long iz = long(z * s.stride + a) - long(s.pad_d);
                  const long iy = long(y * s.stride + b) - long(s.pad_hw);
                  const long ix = long(xx * s.stride + c) - long(s.pad_hw);
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= long(s.d) || iy >= long(s.h) ||
                      ix >= long(s.w))
                    continue;
                  const double xv = x[((ci * s.d + iz) * s.h + iy) * s.w + ix];
                  const double wv = w[(((co * s.cin + ci) * s.kd + a) * s.kh + b) * s.kw + c];
                  acc += xv * wv;
                }
          out[((co * od + z) * oh + y) * ow + xx] = acc;
        }
  return out;
}

/// Half-pixel source coordinate and its two taps, computed point by point.
inline void linear_source(std::size_t dst, std::size_t in, std::size_t out, std::size_t& lo,
                          double& t) {
  if (in == 1) {
    lo = 0;
    t = 0;
    return;
  }
  const double src = (double(dst) + 0.5) * double(in) / double(out) - 0.5;
  double base = std::floor(src);
  base = std::min(std::max(base, 0.0), double(in - 2));
  lo = std::size_t(base);
  t = src - base;
}

/// Trilinear interpolation evaluated independently per output voxel with all
/// eight corner weights.
inline std::vector<double> trilinear_oracle(const std::vector<double>& x, std::size_t c,
                                            std::array<std::size_t, 3> in,
                                            std::array<std::size_t, 3> out) {
  std::vector<double> y(c * out[0] * out[1] * out[2], 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < out[0]; ++i)
      for (std::size_t j = 0; j < out[1]; ++j)
        for (std::size_t k = 0; k < out[2]; ++k) {
          std::size_t l0, l1, l2;
          double t0, t1, t2;
          linear_source(i, in[0], out[0], l0, t0);
          linear_source(j, in[1], out[1], l1, t1);
          linear_source(k, in[2], out[2], l2, t2);
          double acc = 0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) {
                const double wa = a ? t0 : 1 - t0;
                const double wb = b ? t1 : 1 - t1;
                const double we = e ? t2 : 1 - t2;
                const std::size_t ia = std::min(l0 + a, in[0] - 1);
                const std::size_t ib = std::min(l1 + b, in[1] - 1);
                const std::size_t ie = std::min(l2 + e, in[2] - 1);
                if (wa * wb * we == 0.0) continue;
                acc += wa * wb * we * x[((ch * in[0] + ia) * in[1] + ib) * in[2] + ie];
              }
          y[((ch * out[0] + i) * out[1] + j) * out[2] + k] = acc;
        }
  return y;
}

}  // namespace triplane::testing
