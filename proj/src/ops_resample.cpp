#include <algorithm>
#include <cmath>

#include "op_support.hpp"
#include "triplane/flop_costs.hpp"
#include "triplane/ops.hpp"

namespace triplane {

using detail::finish;
using detail::grad_of;
using detail::new_node;

namespace {

template <typename Real>
struct Tap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  Real w_lo = 1;
  Real w_hi = 0;
};

template <typename Real>
std::vector<Tap<Real>> linear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap<Real>> taps(out);
  if (in == 1) return taps;
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    const double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    const double floor_src = std::floor(src);
    const double lo = std::clamp(floor_src, 0.0, static_cast<double>(in - 2));
    const double t = src - lo;
    taps[d].lo = static_cast<std::size_t>(lo);
    taps[d].hi = taps[d].lo + 1;
    taps[d].w_lo = static_cast<Real>(1.0 - t);
    taps[d].w_hi = static_cast<Real>(t);
  }
  return taps;
}

}  // namespace

template <typename Real>
Tensor<Real> resize_axis_linear(const Tensor<Real>& x, std::size_t axis, std::size_t size) {
  detail::require_defined(x, "resize_axis_linear");
  if (axis >= x.dim()) throw ShapeError("resize_axis_linear: invalid axis");
  if (size == 0) throw ShapeError("resize_axis_linear: target size must be >= 1");
  if (x.shape()[axis] == 0) throw ShapeError("resize_axis_linear: empty source axis");
  detail::check_inputs({&x}, "resize_axis_linear");
  const Shape& in_shape = x.shape();
  const std::size_t in_len = in_shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in_shape[i];
  for (std::size_t i = axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
  Shape out_shape = in_shape;
  out_shape[axis] = size;
  auto out = new_node<Real>(out_shape, "resize_axis_linear");
  const Real* px = x.data().data();
  Real* po = out->value.data();

  if (size == in_len) {
    std::copy(px, px + x.numel(), po);
    return finish<Real>(out, detail::should_record({&x}), [nx = x.node()](auto& self) {
      Real* gx = grad_of(nx);
      if (!gx) return;
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad.data()[i];
    });
  }

  auto taps = linear_taps<Real>(in_len, size);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t d = 0; d < size; ++d) {
      const Tap<Real>& t = taps[d];
      const Real* lo = px + (o * in_len + t.lo) * inner;
      const Real* hi = px + (o * in_len + t.hi) * inner;
      Real* dst = po + (o * size + d) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] = t.w_lo * lo[i] + t.w_hi * hi[i];
    }
  }
  add_flops(flop_cost::kLinearInterp * out->value.size());
  return finish<Real>(out, detail::should_record({&x}),
                      [nx = x.node(), taps = std::move(taps), outer, inner, in_len,
                       size](auto& self) {
                        Real* gx = grad_of(nx);
                        if (!gx) return;
                        const Real* g = self.grad.data();
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t d = 0; d < size; ++d) {
                            const Tap<Real>& t = taps[d];
                            Real* lo = gx + (o * in_len + t.lo) * inner;
                            Real* hi = gx + (o * in_len + t.hi) * inner;
                            const Real* src = g + (o * size + d) * inner;
                            for (std::size_t i = 0; i < inner; ++i) {
                              lo[i] += t.w_lo * src[i];
                              hi[i] += t.w_hi * src[i];
                            }
                          }
                        }
                      });
}

template <typename Real>
Tensor<Real> trilinear_resize(const Tensor<Real>& x, const std::array<std::size_t, 3>& size) {
  detail::require_defined(x, "trilinear_resize");
  if (x.dim() != 4) {
    throw ShapeError("trilinear_resize: expects C x D x H x W, got " + shape_str(x.shape()));
  }
  for (std::size_t s : size) {
    if (s == 0) throw ShapeError("trilinear_resize: zero target dimension");
  }
  Tensor<Real> y = resize_axis_linear(x, 3, size[2]);
  y = resize_axis_linear(y, 2, size[1]);
  return resize_axis_linear(y, 1, size[0]);
}

#define TRIPLANE_INSTANTIATE(Real)                                                          \
  template Tensor<Real> resize_axis_linear(const Tensor<Real>&, std::size_t, std::size_t);  \
  template Tensor<Real> trilinear_resize(const Tensor<Real>&, const std::array<std::size_t, 3>&);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
