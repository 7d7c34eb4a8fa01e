#include <algorithm>
#include <cstddef>

#include <Eigen/Core>

#include "op_support.hpp"
#include "triplane/flop_costs.hpp"
#include "triplane/ops.hpp"

namespace triplane {

using detail::finish;
using detail::grad_of;
using detail::new_node;

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using StridedMap = Eigen::Map<RowMat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using ConstStridedMap = Eigen::Map<const RowMat<Real>, 0, Eigen::OuterStride<>>;

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

// Convolution over a (depth, height, width) grid; 2D convolutions use a
// depth of one.
struct ConvGeometry {
  std::size_t cin = 0, cout = 0;
  std::size_t in_d = 1, in_h = 1, in_w = 1;
  std::size_t k_d = 1, k_h = 1, k_w = 1;
  std::size_t s_d = 1, s_h = 1, s_w = 1;
  std::size_t p_d = 0, p_h = 0, p_w = 0;
  std::size_t out_d = 1, out_h = 1, out_w = 1;

  std::size_t kernel_volume() const { return k_d * k_h * k_w; }
  std::size_t rows() const { return cin * kernel_volume(); }
  std::size_t in_spatial() const { return in_d * in_h * in_w; }
  std::size_t out_spatial() const { return out_d * out_h * out_w; }
  std::size_t lines() const { return out_d * out_h; }
  bool pointwise() const {
    return kernel_volume() == 1 && s_d == 1 && s_h == 1 && s_w == 1 && p_d == 0 && p_h == 0 &&
           p_w == 0;
  }
};

std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                          const char* op) {
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (in + 2 * pad < k) {
    throw ShapeError(std::string(op) + ": kernel larger than padded input");
  }
  const std::size_t span = in + 2 * pad - k;
  if (span % stride != 0) {
    throw ShapeError(std::string(op) + ": non-integral output size (" + std::to_string(in) +
                     " + 2*" + std::to_string(pad) + " - " + std::to_string(k) +
                     ") / " + std::to_string(stride));
  }
  return span / stride + 1;
}

// Copies the receptive-field rows for output lines [line0, line1) into a
// rows() x ((line1-line0) * out_w) column matrix.
template <typename Real>
void gather_columns(const Real* x, const ConvGeometry& g, std::size_t line0, std::size_t line1,
                    Real* col) {
  const std::size_t n = (line1 - line0) * g.out_w;
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(g.rows());
  const std::size_t kvol = g.kernel_volume();
#pragma omp parallel for if (rows * static_cast<std::ptrdiff_t>(n) > (1 << 16))
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t ci = static_cast<std::size_t>(r) / kvol;
    const std::size_t rem = static_cast<std::size_t>(r) % kvol;
    const std::size_t a = rem / (g.k_h * g.k_w);
    const std::size_t b = (rem / g.k_w) % g.k_h;
    const std::size_t c = rem % g.k_w;
    Real* dst = col + static_cast<std::size_t>(r) * n;
    for (std::size_t line = line0; line < line1; ++line) {
      Real* row = dst + (line - line0) * g.out_w;
      const std::size_t od = line / g.out_h;
      const std::size_t oh = line % g.out_h;
      const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * g.s_d + a) -
                                static_cast<std::ptrdiff_t>(g.p_d);
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.s_h + b) -
                                static_cast<std::ptrdiff_t>(g.p_h);
      if (id < 0 || ih < 0 || id >= static_cast<std::ptrdiff_t>(g.in_d) ||
          ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
        std::fill(row, row + g.out_w, Real(0));
        continue;
      }
      const Real* src = x + ((ci * g.in_d + static_cast<std::size_t>(id)) * g.in_h +
                             static_cast<std::size_t>(ih)) *
                                g.in_w;
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.s_w + c) -
                                  static_cast<std::ptrdiff_t>(g.p_w);
        row[ow] = (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) ? src[iw] : Real(0);
      }
    }
  }
}

// Adjoint of gather_columns: accumulates column gradients into the input.
template <typename Real>
void scatter_columns(const Real* col, const ConvGeometry& g, std::size_t line0, std::size_t line1,
                     Real* gx) {
  const std::size_t n = (line1 - line0) * g.out_w;
  const std::size_t kvol = g.kernel_volume();
  const std::ptrdiff_t channels = static_cast<std::ptrdiff_t>(g.cin);
#pragma omp parallel for if (channels > 1 && g.rows() * n > (1 << 16))
  for (std::ptrdiff_t cis = 0; cis < channels; ++cis) {
    const std::size_t ci = static_cast<std::size_t>(cis);
    for (std::size_t rem = 0; rem < kvol; ++rem) {
      const std::size_t a = rem / (g.k_h * g.k_w);
      const std::size_t b = (rem / g.k_w) % g.k_h;
      const std::size_t c = rem % g.k_w;
      const Real* srcrow = col + (ci * kvol + rem) * n;
      for (std::size_t line = line0; line < line1; ++line) {
        const std::size_t od = line / g.out_h;
        const std::size_t oh = line % g.out_h;
        const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * g.s_d + a) -
                                  static_cast<std::ptrdiff_t>(g.p_d);
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.s_h + b) -
                                  static_cast<std::ptrdiff_t>(g.p_h);
        if (id < 0 || ih < 0 || id >= static_cast<std::ptrdiff_t>(g.in_d) ||
            ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
          continue;
        }
        Real* dst = gx + ((ci * g.in_d + static_cast<std::size_t>(id)) * g.in_h +
                          static_cast<std::size_t>(ih)) *
                             g.in_w;
        const Real* row = srcrow + (line - line0) * g.out_w;
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.s_w + c) -
                                    static_cast<std::ptrdiff_t>(g.p_w);
          if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) dst[iw] += row[ow];
        }
      }
    }
  }
}

std::size_t lines_per_tile(const ConvGeometry& g) {
  constexpr std::size_t kTargetElements = std::size_t(1) << 18;
  const std::size_t per_line = std::max<std::size_t>(1, g.rows() * g.out_w);
  return std::clamp<std::size_t>(kTargetElements / per_line, 1, g.lines());
}

template <typename Real>
Tensor<Real> conv_nd(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias,
                     const ConvGeometry& g, const Shape& out_shape, const char* op) {
  detail::check_inputs({&x, &w, &bias}, op);
  const std::size_t S = g.out_spatial();
  const std::size_t R = g.rows();
  auto out = new_node<Real>(out_shape, op);
  const Real* px = x.data().data();
  ConstMatMap<Real> weight(w.data().data(), idx(g.cout), idx(R));
  Real* po = out->value.data();

  if (g.pointwise()) {
    ConstMatMap<Real> in(px, idx(g.cin), idx(S));
    MatMap<Real> result(po, idx(g.cout), idx(S));
    result.noalias() = weight * in;
  } else {
    const std::size_t tile = lines_per_tile(g);
    detail::Storage<Real> col(R * tile * g.out_w);
    for (std::size_t l0 = 0; l0 < g.lines(); l0 += tile) {
      const std::size_t l1 = std::min(g.lines(), l0 + tile);
      const std::size_t n = (l1 - l0) * g.out_w;
      gather_columns(px, g, l0, l1, col.data());
      ConstMatMap<Real> cols(col.data(), idx(R), idx(n));
      StridedMap<Real> block(po + l0 * g.out_w, idx(g.cout), idx(n), Eigen::OuterStride<>(idx(S)));
      block.noalias() = weight * cols;
    }
  }
  std::uint64_t flops = flop_cost::kMultiplyAdd * R * g.cout * S;
  if (bias.defined()) {
    const Real* pb = bias.data().data();
    for (std::size_t co = 0; co < g.cout; ++co) {
      Real* row = po + co * S;
      const Real b = pb[co];
      for (std::size_t s = 0; s < S; ++s) row[s] += b;
    }
    flops += g.cout * S;
  }
  add_flops(flops);

  const bool record = detail::should_record({&x, &w, &bias});
  return finish<Real>(out, record, [nx = x.node(), nw = w.node(),
                                    nb = bias.defined() ? bias.node() : detail::NodePtr<Real>{},
                                    g](auto& self) {
    const std::size_t S = g.out_spatial();
    const std::size_t R = g.rows();
    const Real* gout = self.grad.data();
    if (Real* gb = grad_of(nb)) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        Real acc = 0;
        for (std::size_t s = 0; s < S; ++s) acc += gout[co * S + s];
        gb[co] += acc;
      }
    }
    Real* gw = grad_of(nw);
    Real* gx = grad_of(nx);
    if (!gw && !gx) return;
    ConstMatMap<Real> weight(nw->value.data(), idx(g.cout), idx(R));
    const Real* px = nx->value.data();
    if (g.pointwise()) {
      ConstMatMap<Real> go(gout, idx(g.cout), idx(S));
      if (gw) {
        ConstMatMap<Real> in(px, idx(g.cin), idx(S));
        MatMap<Real>(gw, idx(g.cout), idx(R)).noalias() += go * in.transpose();
      }
      if (gx) MatMap<Real>(gx, idx(g.cin), idx(S)).noalias() += weight.transpose() * go;
      return;
    }
    const std::size_t tile = lines_per_tile(g);
    detail::Storage<Real> col(R * tile * g.out_w);
    detail::Storage<Real> gcol(gx ? R * tile * g.out_w : 0);
    for (std::size_t l0 = 0; l0 < g.lines(); l0 += tile) {
      const std::size_t l1 = std::min(g.lines(), l0 + tile);
      const std::size_t n = (l1 - l0) * g.out_w;
      ConstStridedMap<Real> go(gout + l0 * g.out_w, idx(g.cout), idx(n),
                               Eigen::OuterStride<>(idx(S)));
      if (gw) {
        gather_columns(px, g, l0, l1, col.data());
        ConstMatMap<Real> cols(col.data(), idx(R), idx(n));
        MatMap<Real>(gw, idx(g.cout), idx(R)).noalias() += go * cols.transpose();
      }
      if (gx) {
        MatMap<Real> gc(gcol.data(), idx(R), idx(n));
        gc.noalias() = weight.transpose() * go;
        scatter_columns(gcol.data(), g, l0, l1, gx);
      }
    }
  });
}

void require_odd_kernel(std::size_t k, const char* op) {
  if (k == 0 || k % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel size must be odd, got " + std::to_string(k));
  }
}

}  // namespace

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias,
                    std::size_t stride, std::size_t pad) {
  detail::require_defined(x, "conv2d");
  detail::require_defined(w, "conv2d");
  if (x.dim() != 3) throw ShapeError("conv2d: input must be C x H x W, got " + shape_str(x.shape()));
  if (w.dim() != 4 || w.shape()[2] != w.shape()[3]) {
    throw ShapeError("conv2d: weight must be C_out x C_in x k x k, got " + shape_str(w.shape()));
  }
  if (w.shape()[1] != x.shape()[0]) {
    throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(x.shape()[0]) +
                     ", weight expects " + std::to_string(w.shape()[1]));
  }
  require_odd_kernel(w.shape()[2], "conv2d");
  ConvGeometry g;
  g.cin = x.shape()[0];
  g.cout = w.shape()[0];
  g.in_h = x.shape()[1];
  g.in_w = x.shape()[2];
  g.k_h = g.k_w = w.shape()[2];
  g.s_h = g.s_w = stride;
  g.p_h = g.p_w = pad;
  g.out_h = conv_out_size(g.in_h, g.k_h, stride, pad, "conv2d");
  g.out_w = conv_out_size(g.in_w, g.k_w, stride, pad, "conv2d");
  if (bias.defined() && bias.numel() != g.cout) throw ShapeError("conv2d: bias size mismatch");
  return conv_nd(x, w, bias, g, Shape{g.cout, g.out_h, g.out_w}, "conv2d");
}

template <typename Real>
Tensor<Real> conv3d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias,
                    std::size_t stride, std::size_t pad) {
  detail::require_defined(x, "conv3d");
  detail::require_defined(w, "conv3d");
  if (x.dim() != 4) {
    throw ShapeError("conv3d: input must be C x D x H x W, got " + shape_str(x.shape()));
  }
  if (w.dim() != 5 || w.shape()[2] != w.shape()[3] || w.shape()[3] != w.shape()[4]) {
    throw ShapeError("conv3d: weight must be C_out x C_in x k x k x k, got " +
                     shape_str(w.shape()));
  }
  if (w.shape()[1] != x.shape()[0]) {
    throw ShapeError("conv3d: channel mismatch, input has " + std::to_string(x.shape()[0]) +
                     ", weight expects " + std::to_string(w.shape()[1]));
  }
  require_odd_kernel(w.shape()[2], "conv3d");
  ConvGeometry g;
  g.cin = x.shape()[0];
  g.cout = w.shape()[0];
  g.in_d = x.shape()[1];
  g.in_h = x.shape()[2];
  g.in_w = x.shape()[3];
  g.k_d = g.k_h = g.k_w = w.shape()[2];
  g.s_d = g.s_h = g.s_w = stride;
  g.p_d = g.p_h = g.p_w = pad;
  g.out_d = conv_out_size(g.in_d, g.k_d, stride, pad, "conv3d");
  g.out_h = conv_out_size(g.in_h, g.k_h, stride, pad, "conv3d");
  g.out_w = conv_out_size(g.in_w, g.k_w, stride, pad, "conv3d");
  if (bias.defined() && bias.numel() != g.cout) throw ShapeError("conv3d: bias size mismatch");
  return conv_nd(x, w, bias, g, Shape{g.cout, g.out_d, g.out_h, g.out_w}, "conv3d");
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_defined(a, "matmul");
  detail::require_defined(b, "matmul");
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  detail::check_inputs({&a, &b}, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = new_node<Real>(Shape{m, n}, "matmul");
  MatMap<Real>(out->value.data(), idx(m), idx(n)).noalias() =
      ConstMatMap<Real>(a.data().data(), idx(m), idx(k)) *
      ConstMatMap<Real>(b.data().data(), idx(k), idx(n));
  add_flops(flop_cost::kMultiplyAdd * m * k * n);
  return finish<Real>(out, detail::should_record({&a, &b}),
                      [na = a.node(), nb = b.node(), m, k, n](auto& self) {
                        ConstMatMap<Real> g(self.grad.data(), idx(m), idx(n));
                        if (Real* ga = grad_of(na)) {
                          MatMap<Real>(ga, idx(m), idx(k)).noalias() +=
                              g * ConstMatMap<Real>(nb->value.data(), idx(k), idx(n)).transpose();
                        }
                        if (Real* gb = grad_of(nb)) {
                          MatMap<Real>(gb, idx(k), idx(n)).noalias() +=
                              ConstMatMap<Real>(na->value.data(), idx(m), idx(k)).transpose() * g;
                        }
                      });
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  detail::require_defined(x, "linear");
  detail::require_defined(w, "linear");
  if (x.dim() != 2 || w.dim() != 2 || x.shape()[1] != w.shape()[1]) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  const std::size_t rows = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  if (b.defined() && b.numel() != out_dim) throw ShapeError("linear: bias size mismatch");
  detail::check_inputs({&x, &w, &b}, "linear");
  auto out = new_node<Real>(Shape{rows, out_dim}, "linear");
  MatMap<Real> y(out->value.data(), idx(rows), idx(out_dim));
  y.noalias() = ConstMatMap<Real>(x.data().data(), idx(rows), idx(in)) *
                ConstMatMap<Real>(w.data().data(), idx(out_dim), idx(in)).transpose();
  std::uint64_t flops = flop_cost::kMultiplyAdd * rows * in * out_dim;
  if (b.defined()) {
    const Real* pb = b.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_dim; ++o) y(idx(r), idx(o)) += pb[o];
    }
    flops += rows * out_dim;
  }
  add_flops(flops);
  return finish<Real>(out, detail::should_record({&x, &w, &b}),
                      [nx = x.node(), nw = w.node(),
                       nb = b.defined() ? b.node() : detail::NodePtr<Real>{}, rows, in,
                       out_dim](auto& self) {
                        ConstMatMap<Real> g(self.grad.data(), idx(rows), idx(out_dim));
                        if (Real* gx = grad_of(nx)) {
                          MatMap<Real>(gx, idx(rows), idx(in)).noalias() +=
                              g * ConstMatMap<Real>(nw->value.data(), idx(out_dim), idx(in));
                        }
                        if (Real* gw = grad_of(nw)) {
                          MatMap<Real>(gw, idx(out_dim), idx(in)).noalias() +=
                              g.transpose() *
                              ConstMatMap<Real>(nx->value.data(), idx(rows), idx(in));
                        }
                        if (Real* gb = grad_of(nb)) {
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g(idx(r), idx(o));
                          }
                        }
                      });
}

#define TRIPLANE_INSTANTIATE(Real)                                                             \
  template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,  \
                               std::size_t, std::size_t);                                      \
  template Tensor<Real> conv3d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,  \
                               std::size_t, std::size_t);                                      \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                      \
  template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
