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
bool is_scalar_operand(const Tensor<Real>& a, const Tensor<Real>& b) {
  return b.numel() == 1 && (a.numel() != 1 || a.shape() != b.shape());
}

template <typename Real>
void require_binary_shapes(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  detail::require_defined(a, op);
  detail::require_defined(b, op);
  if (a.shape() != b.shape() && b.numel() != 1) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_binary_shapes(a, b, "add");
  detail::check_inputs({&a, &b}, "add");
  const bool scalar = is_scalar_operand(a, b);
  const std::size_t n = a.numel();
  auto out = new_node<Real>(a.shape(), "add");
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out->value.data();
  if (scalar) {
    const Real s = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + s;
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  }
  add_flops(n * flop_cost::kElementwise);
  return finish<Real>(out, detail::should_record({&a, &b}),
                      [na = a.node(), nb = b.node(), scalar, n](auto& self) {
                        const Real* g = self.grad.data();
                        if (Real* ga = grad_of(na)) {
                          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                        }
                        if (Real* gb = grad_of(nb)) {
                          if (scalar) {
                            Real acc = 0;
                            for (std::size_t i = 0; i < n; ++i) acc += g[i];
                            gb[0] += acc;
                          } else {
                            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
                          }
                        }
                      });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_binary_shapes(a, b, "sub");
  detail::check_inputs({&a, &b}, "sub");
  const bool scalar = is_scalar_operand(a, b);
  const std::size_t n = a.numel();
  auto out = new_node<Real>(a.shape(), "sub");
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out->value.data();
  if (scalar) {
    const Real s = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - s;
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  }
  add_flops(n * flop_cost::kElementwise);
  return finish<Real>(out, detail::should_record({&a, &b}),
                      [na = a.node(), nb = b.node(), scalar, n](auto& self) {
                        const Real* g = self.grad.data();
                        if (Real* ga = grad_of(na)) {
                          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                        }
                        if (Real* gb = grad_of(nb)) {
                          if (scalar) {
                            Real acc = 0;
                            for (std::size_t i = 0; i < n; ++i) acc += g[i];
                            gb[0] -= acc;
                          } else {
                            for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                          }
                        }
                      });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_binary_shapes(a, b, "mul");
  detail::check_inputs({&a, &b}, "mul");
  const bool scalar = is_scalar_operand(a, b);
  const std::size_t n = a.numel();
  auto out = new_node<Real>(a.shape(), "mul");
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* po = out->value.data();
  if (scalar) {
    const Real s = pb[0];
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * s;
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  }
  add_flops(n * flop_cost::kElementwise);
  return finish<Real>(out, detail::should_record({&a, &b}),
                      [na = a.node(), nb = b.node(), scalar, n](auto& self) {
                        const Real* g = self.grad.data();
                        const Real* va = na->value.data();
                        const Real* vb = nb->value.data();
                        if (Real* ga = grad_of(na)) {
                          if (scalar) {
                            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[0];
                          } else {
                            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
                          }
                        }
                        if (Real* gb = grad_of(nb)) {
                          if (scalar) {
                            Real acc = 0;
                            for (std::size_t i = 0; i < n; ++i) acc += g[i] * va[i];
                            gb[0] += acc;
                          } else {
                            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
                          }
                        }
                      });
}

namespace {

// Unary op whose derivative can be written from the input and output values.
template <typename Real, typename Fwd, typename Deriv>
Tensor<Real> unary(const Tensor<Real>& a, const char* op, std::uint64_t cost, Fwd fwd,
                   Deriv deriv) {
  detail::require_defined(a, op);
  detail::check_inputs({&a}, op);
  const std::size_t n = a.numel();
  auto out = new_node<Real>(a.shape(), op);
  const Real* pa = a.data().data();
  Real* po = out->value.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  add_flops(n * cost);
  return finish<Real>(out, detail::should_record({&a}), [na = a.node(), n, deriv](auto& self) {
    Real* ga = grad_of(na);
    if (!ga) return;
    const Real* g = self.grad.data();
    const Real* x = na->value.data();
    const Real* y = self.value.data();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  return unary<Real>(
      a, "scale", flop_cost::kElementwise, [factor](Real x) { return x * factor; },
      [factor](Real, Real) { return factor; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real value) {
  return unary<Real>(
      a, "add_scalar", flop_cost::kElementwise, [value](Real x) { return x + value; },
      [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> negate(const Tensor<Real>& a) {
  return unary<Real>(
      a, "negate", flop_cost::kElementwise, [](Real x) { return -x; },
      [](Real, Real) { return Real(-1); });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  return unary<Real>(
      a, "relu", flop_cost::kElementwise, [](Real x) { return x < Real(0) ? Real(0) : x; },
      [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return unary<Real>(
      a, "sigmoid", flop_cost::kSigmoid,
      [](Real x) {
        if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> scale_channels(const Tensor<Real>& x, const Tensor<Real>& w) {
  detail::require_defined(x, "scale_channels");
  detail::require_defined(w, "scale_channels");
  if (x.dim() == 0) throw ShapeError("scale_channels: input needs a channel axis");
  const std::size_t channels = x.shape()[0];
  const bool shared = w.numel() == 1;
  if (!shared && w.numel() != channels) {
    throw ShapeError("scale_channels: " + std::to_string(w.numel()) + " weights for " +
                     std::to_string(channels) + " channels");
  }
  detail::check_inputs({&x, &w}, "scale_channels");
  const std::size_t n = x.numel();
  const std::size_t per = channels ? n / channels : 0;
  auto out = new_node<Real>(x.shape(), "scale_channels");
  const Real* px = x.data().data();
  const Real* pw = w.data().data();
  Real* po = out->value.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const Real s = pw[shared ? 0 : c];
    for (std::size_t i = 0; i < per; ++i) po[c * per + i] = px[c * per + i] * s;
  }
  add_flops(n * flop_cost::kElementwise);
  return finish<Real>(out, detail::should_record({&x, &w}),
                      [nx = x.node(), nw = w.node(), shared, channels, per](auto& self) {
                        const Real* g = self.grad.data();
                        const Real* vx = nx->value.data();
                        const Real* vw = nw->value.data();
                        Real* gx = grad_of(nx);
                        Real* gw = grad_of(nw);
                        for (std::size_t c = 0; c < channels; ++c) {
                          const Real s = vw[shared ? 0 : c];
                          Real acc = 0;
                          for (std::size_t i = 0; i < per; ++i) {
                            const std::size_t k = c * per + i;
                            if (gx) gx[k] += g[k] * s;
                            acc += g[k] * vx[k];
                          }
                          if (gw) gw[shared ? 0 : c] += acc;
                        }
                      });
}

#define TRIPLANE_INSTANTIATE(Real)                                                   \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);               \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);               \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);               \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                            \
  template Tensor<Real> add_scalar(const Tensor<Real>&, Real);                       \
  template Tensor<Real> negate(const Tensor<Real>&);                                 \
  template Tensor<Real> relu(const Tensor<Real>&);                                   \
  template Tensor<Real> sigmoid(const Tensor<Real>&);                                \
  template Tensor<Real> scale_channels(const Tensor<Real>&, const Tensor<Real>&);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
