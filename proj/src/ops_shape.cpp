#include <algorithm>

#include "op_support.hpp"
#include "triplane/ops.hpp"

namespace triplane {

using detail::finish;
using detail::grad_of;
using detail::new_node;

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, const Shape& shape) {
  detail::require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  auto out = new_node<Real>(shape, "reshape");
  std::copy(x.data().begin(), x.data().end(), out->value.data());
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node()](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += g[i];
  });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x) {
  detail::require_defined(x, "transpose");
  if (x.dim() != 2) throw ShapeError("transpose: expects a matrix, got " + shape_str(x.shape()));
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  auto out = new_node<Real>(Shape{cols, rows}, "transpose");
  const Real* px = x.data().data();
  Real* po = out->value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) po[c * rows + r] = px[r * cols + c];
  }
  return finish<Real>(out, detail::should_record({&x}), [nx = x.node(), rows, cols](auto& self) {
    Real* gx = grad_of(nx);
    if (!gx) return;
    const Real* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c * rows + r];
    }
  });
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, std::size_t axis, std::size_t start, std::size_t length) {
  detail::require_defined(x, "slice");
  if (axis >= x.dim()) throw ShapeError("slice: invalid axis");
  if (length == 0 || start + length > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside axis of length " +
                     std::to_string(x.shape()[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape()[i];
  const std::size_t full = x.shape()[axis];
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto out = new_node<Real>(out_shape, "slice");
  const Real* px = x.data().data();
  Real* po = out->value.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const Real* src = px + (o * full + start) * inner;
    std::copy(src, src + length * inner, po + o * length * inner);
  }
  return finish<Real>(out, detail::should_record({&x}),
                      [nx = x.node(), outer, inner, full, start, length](auto& self) {
                        Real* gx = grad_of(nx);
                        if (!gx) return;
                        const Real* g = self.grad.data();
                        for (std::size_t o = 0; o < outer; ++o) {
                          Real* dst = gx + (o * full + start) * inner;
                          const Real* src = g + o * length * inner;
                          for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                        }
                      });
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) detail::require_defined(p, "concat");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: invalid axis");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) {
        throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
      }
    }
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Shape out_shape = ref;
  out_shape[axis] = total;
  auto out = new_node<Real>(out_shape, "concat");
  Real* po = out->value.data();
  std::size_t offset = 0;
  bool record = false;
  std::vector<detail::NodePtr<Real>> nodes;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[axis];
    const Real* src = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * len * inner, src + (o + 1) * len * inner,
                po + (o * total + offset) * inner);
    }
    offset += len;
    record = record || detail::should_record({&p});
    nodes.push_back(p.node());
    lengths.push_back(len);
  }
  return finish<Real>(out, record,
                      [nodes = std::move(nodes), lengths = std::move(lengths), outer, inner,
                       total](auto& self) {
                        const Real* g = self.grad.data();
                        std::size_t offset = 0;
                        for (std::size_t k = 0; k < nodes.size(); ++k) {
                          const std::size_t len = lengths[k];
                          if (Real* gp = grad_of(nodes[k])) {
                            for (std::size_t o = 0; o < outer; ++o) {
                              const Real* src = g + (o * total + offset) * inner;
                              Real* dst = gp + o * len * inner;
                              for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                            }
                          }
                          offset += len;
                        }
                      });
}

#define TRIPLANE_INSTANTIATE(Real)                                                             \
  template Tensor<Real> reshape(const Tensor<Real>&, const Shape&);                            \
  template Tensor<Real> transpose(const Tensor<Real>&);                                        \
  template Tensor<Real> slice(const Tensor<Real>&, std::size_t, std::size_t, std::size_t);     \
  template Tensor<Real> concat(const std::vector<Tensor<Real>>&, std::size_t);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
