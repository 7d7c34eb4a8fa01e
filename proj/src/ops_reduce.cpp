#include <algorithm>
#include <type_traits>
#include <vector>

#include "op_support.hpp"
#include "triplane/flop_costs.hpp"
#include "triplane/ops.hpp"

namespace triplane {

using detail::finish;
using detail::grad_of;
using detail::new_node;

namespace {

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  detail::require_defined(x, "sum");
  detail::check_inputs({&x}, "sum");
  auto out = new_node<Real>(Shape{}, "sum");
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  out->value.data()[0] = acc;
  add_flops(x.numel());
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node()](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real g = self.grad.data()[0];
    for (std::size_t i = 0; i < nx->value.size(); ++i) gx[i] += g;
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  detail::require_defined(x, "mean");
  detail::check_inputs({&x}, "mean");
  const std::size_t n = x.numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  auto out = new_node<Real>(Shape{}, "mean");
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  out->value.data()[0] = acc / static_cast<Real>(n);
  add_flops(n);
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node(), n](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real g = self.grad.data()[0] / static_cast<Real>(n);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, std::size_t axis) {
  detail::require_defined(x, "mean_axis");
  if (axis >= x.dim()) {
    throw ShapeError("mean_axis: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  }
  if (x.shape()[axis] == 0) throw ShapeError("mean_axis: reduced axis is empty");
  detail::check_inputs({&x}, "mean_axis");
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  auto out = new_node<Real>(out_shape, "mean_axis");
  const Real* px = x.data().data();
  Real* po = out->value.data();
  const Real inv_len = Real(1) / static_cast<Real>(s.length);
  // Wide accumulator: the mean of identical values is exact.
  using Acc = std::conditional_t<std::is_same_v<Real, float>, double, long double>;
  std::vector<Acc> acc(s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::fill(acc.begin(), acc.end(), Acc(0));
    for (std::size_t d = 0; d < s.length; ++d) {
      const Real* src = px + (o * s.length + d) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) acc[i] += src[i];
    }
    Real* dst = po + o * s.inner;
    for (std::size_t i = 0; i < s.inner; ++i) {
      dst[i] = static_cast<Real>(acc[i] / static_cast<Acc>(s.length));
    }
  }
  add_flops(x.numel());
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node(), s, inv_len](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t d = 0; d < s.length; ++d) {
        Real* dst = gx + (o * s.length + d) * s.inner;
        const Real* src = g + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * inv_len;
      }
    }
  });
}

template <typename Real>
Tensor<Real> broadcast_axis(const Tensor<Real>& x, std::size_t axis, std::size_t size) {
  detail::require_defined(x, "broadcast_axis");
  if (axis > x.dim()) {
    throw ShapeError("broadcast_axis: insertion axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  }
  if (size == 0) throw ShapeError("broadcast_axis: size must be >= 1");
  detail::check_inputs({&x}, "broadcast_axis");
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), size);
  const AxisSplit s = split_at(out_shape, axis);
  auto out = new_node<Real>(out_shape, "broadcast_axis");
  const Real* px = x.data().data();
  Real* po = out->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const Real* src = px + o * s.inner;
    for (std::size_t d = 0; d < s.length; ++d) {
      std::copy(src, src + s.inner, po + (o * s.length + d) * s.inner);
    }
  }
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node(), s](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real* g = self.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      Real* dst = gx + o * s.inner;
      for (std::size_t d = 0; d < s.length; ++d) {
        const Real* src = g + (o * s.length + d) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename Real>
Tensor<Real> block_mean_axis(const Tensor<Real>& x, std::size_t axis, std::size_t factor) {
  detail::require_defined(x, "block_mean_axis");
  if (axis >= x.dim()) throw ShapeError("block_mean_axis: invalid axis");
  if (factor == 0) throw ShapeError("block_mean_axis: factor must be >= 1");
  detail::check_inputs({&x}, "block_mean_axis");
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t blocks = (s.length + factor - 1) / factor;
  if (blocks == 0) throw ShapeError("block_mean_axis: empty axis");
  Shape out_shape = x.shape();
  out_shape[axis] = blocks;
  auto out = new_node<Real>(out_shape, "block_mean_axis");
  const Real* px = x.data().data();
  Real* po = out->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t d0 = b * factor;
      const std::size_t d1 = std::min(s.length, d0 + factor);
      Real* dst = po + (o * blocks + b) * s.inner;
      std::fill(dst, dst + s.inner, Real(0));
      for (std::size_t d = d0; d < d1; ++d) {
        const Real* src = px + (o * s.length + d) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
      const Real count = static_cast<Real>(d1 - d0);
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] /= count;
    }
  }
  add_flops(x.numel());
  return finish<Real>(out, detail::should_record({&x}),
                      [nx = x.node(), s, factor, blocks](auto& self) {
                        Real* gx = grad_of(nx);
                        if (!gx) return;
                        const Real* g = self.grad.data();
                        for (std::size_t o = 0; o < s.outer; ++o) {
                          for (std::size_t b = 0; b < blocks; ++b) {
                            const std::size_t d0 = b * factor;
                            const std::size_t d1 = std::min(s.length, d0 + factor);
                            const Real inv = Real(1) / static_cast<Real>(d1 - d0);
                            const Real* src = g + (o * blocks + b) * s.inner;
                            for (std::size_t d = d0; d < d1; ++d) {
                              Real* dst = gx + (o * s.length + d) * s.inner;
                              for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * inv;
                            }
                          }
                        }
                      });
}

template <typename Real>
Tensor<Real> global_avg_pool(const Tensor<Real>& x) {
  detail::require_defined(x, "global_avg_pool");
  if (x.dim() < 2) throw ShapeError("global_avg_pool: expects C x spatial input");
  detail::check_inputs({&x}, "global_avg_pool");
  const std::size_t channels = x.shape()[0];
  const std::size_t per = x.numel() / channels;
  auto out = new_node<Real>(Shape{channels}, "global_avg_pool");
  const Real* px = x.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    Real acc = 0;
    for (std::size_t i = 0; i < per; ++i) acc += px[c * per + i];
    out->value.data()[c] = acc / static_cast<Real>(per);
  }
  add_flops(x.numel());
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node(), channels, per](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real* g = self.grad.data();
    for (std::size_t c = 0; c < channels; ++c) {
      const Real v = g[c] / static_cast<Real>(per);
      for (std::size_t i = 0; i < per; ++i) gx[c * per + i] += v;
    }
  });
}

#define TRIPLANE_INSTANTIATE(Real)                                                         \
  template Tensor<Real> sum(const Tensor<Real>&);                                          \
  template Tensor<Real> mean(const Tensor<Real>&);                                         \
  template Tensor<Real> mean_axis(const Tensor<Real>&, std::size_t);                       \
  template Tensor<Real> broadcast_axis(const Tensor<Real>&, std::size_t, std::size_t);     \
  template Tensor<Real> block_mean_axis(const Tensor<Real>&, std::size_t, std::size_t);    \
  template Tensor<Real> global_avg_pool(const Tensor<Real>&);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
