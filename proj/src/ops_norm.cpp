#include <algorithm>
#include <cmath>

#include "op_support.hpp"
#include "triplane/flop_costs.hpp"
#include "triplane/ops.hpp"

namespace triplane {

using detail::finish;
using detail::grad_of;
using detail::new_node;

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  detail::require_defined(x, "softmax");
  if (axis >= x.dim()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  }
  detail::check_inputs({&x}, "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape()[i];
  const std::size_t len = x.shape()[axis];
  auto out = new_node<Real>(x.shape(), "softmax");
  const Real* px = x.data().data();
  Real* py = out->value.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      Real mx = px[base];
      for (std::size_t d = 1; d < len; ++d) mx = std::max(mx, px[base + d * inner]);
      Real total = 0;
      for (std::size_t d = 0; d < len; ++d) {
        const Real e = std::exp(px[base + d * inner] - mx);
        py[base + d * inner] = e;
        total += e;
      }
      for (std::size_t d = 0; d < len; ++d) py[base + d * inner] /= total;
    }
  }
  add_flops(flop_cost::kSoftmax * x.numel());
  return finish<Real>(out, detail::should_record({&x}),
                      [nx = x.node(), outer, inner, len](auto& self) {
                        Real* gx = grad_of(nx);
                        if (!gx) return;
                        const Real* g = self.grad.data();
                        const Real* y = self.value.data();
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t i = 0; i < inner; ++i) {
                            const std::size_t base = o * len * inner + i;
                            Real dot = 0;
                            for (std::size_t d = 0; d < len; ++d) {
                              dot += g[base + d * inner] * y[base + d * inner];
                            }
                            for (std::size_t d = 0; d < len; ++d) {
                              const std::size_t k = base + d * inner;
                              gx[k] += y[k] * (g[k] - dot);
                            }
                          }
                        }
                      });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps) {
  detail::require_defined(x, "layer_norm");
  detail::require_defined(gain, "layer_norm");
  detail::require_defined(bias, "layer_norm");
  if (x.dim() == 0) throw ShapeError("layer_norm: scalar input");
  if (!(eps > Real(0))) throw NumericError("layer_norm: epsilon must be positive");
  const std::size_t width = x.shape().back();
  if (gain.numel() != width || bias.numel() != width) {
    throw ShapeError("layer_norm: gain/bias must have length " + std::to_string(width));
  }
  detail::check_inputs({&x, &gain, &bias}, "layer_norm");
  const std::size_t rows = x.numel() / width;
  auto out = new_node<Real>(x.shape(), "layer_norm");
  // Saved per-row statistics: normalised values and inverse std.
  detail::Storage<Real> xhat(x.numel());
  std::vector<Real> inv_std(rows);
  const Real* px = x.data().data();
  const Real* pg = gain.data().data();
  const Real* pb = bias.data().data();
  Real* py = out->value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = px + r * width;
    Real mu = 0;
    for (std::size_t i = 0; i < width; ++i) mu += row[i];
    mu /= static_cast<Real>(width);
    Real var = 0;
    for (std::size_t i = 0; i < width; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<Real>(width);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < width; ++i) {
      const Real h = (row[i] - mu) * is;
      xhat.data()[r * width + i] = h;
      py[r * width + i] = h * pg[i] + pb[i];
    }
  }
  add_flops(flop_cost::kLayerNorm * x.numel());
  auto saved = std::make_shared<detail::Storage<Real>>(std::move(xhat));
  return finish<Real>(
      out, detail::should_record({&x, &gain, &bias}),
      [nx = x.node(), ng = gain.node(), nb = bias.node(), saved, inv_std = std::move(inv_std),
       rows, width](auto& self) {
        const Real* g = self.grad.data();
        const Real* h = saved->data();
        const Real* pg = ng->value.data();
        if (Real* gg = grad_of(ng)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < width; ++i) gg[i] += g[r * width + i] * h[r * width + i];
          }
        }
        if (Real* gb = grad_of(nb)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < width; ++i) gb[i] += g[r * width + i];
          }
        }
        Real* gx = grad_of(nx);
        if (!gx) return;
        const Real inv_w = Real(1) / static_cast<Real>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          Real mean_dh = 0, mean_dh_h = 0;
          for (std::size_t i = 0; i < width; ++i) {
            const Real dh = g[r * width + i] * pg[i];
            mean_dh += dh;
            mean_dh_h += dh * h[r * width + i];
          }
          mean_dh *= inv_w;
          mean_dh_h *= inv_w;
          for (std::size_t i = 0; i < width; ++i) {
            const Real dh = g[r * width + i] * pg[i];
            gx[r * width + i] += inv_std[r] * (dh - mean_dh - h[r * width + i] * mean_dh_h);
          }
        }
      });
}

template <typename Real>
Tensor<Real> bce_with_logits(const Tensor<Real>& logits, const Tensor<Real>& target,
                             Real positive_weight) {
  detail::require_defined(logits, "bce_with_logits");
  detail::require_defined(target, "bce_with_logits");
  if (logits.shape() != target.shape()) {
    throw ShapeError("bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  detail::check_inputs({&logits, &target}, "bce_with_logits");
  const std::size_t n = logits.numel();
  const Real* x = logits.data().data();
  const Real* t = target.data().data();
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // -[w t log s(x) + (1-t) log(1-s(x))], written stably.
    const Real log1p_e = std::log1p(std::exp(-std::abs(x[i])));
    const Real log_sig = std::min(x[i], Real(0)) - log1p_e;       // log s(x)
    const Real log_one_minus = std::min(-x[i], Real(0)) - log1p_e;  // log(1 - s(x))
    total -= positive_weight * t[i] * log_sig + (Real(1) - t[i]) * log_one_minus;
  }
  auto out = new_node<Real>(Shape{}, "bce_with_logits");
  out->value.data()[0] = total / static_cast<Real>(n);
  return finish<Real>(out, detail::should_record({&logits}),
                      [nl = logits.node(), nt = target.node(), n, positive_weight](auto& self) {
                        Real* gl = grad_of(nl);
                        if (!gl) return;
                        const Real g = self.grad.data()[0] / static_cast<Real>(n);
                        const Real* x = nl->value.data();
                        const Real* t = nt->value.data();
                        for (std::size_t i = 0; i < n; ++i) {
                          const Real s = x[i] >= 0 ? Real(1) / (Real(1) + std::exp(-x[i]))
                                                   : std::exp(x[i]) / (Real(1) + std::exp(x[i]));
                          // d/dx = (1 - t) s - w t (1 - s)
                          gl[i] += g * ((Real(1) - t[i]) * s - positive_weight * t[i] * (Real(1) - s));
                        }
                      });
}

template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::size_t label) {
  detail::require_defined(logits, "cross_entropy");
  const std::size_t k = logits.numel();
  if (label >= k) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " outside " +
                     std::to_string(k) + " classes");
  }
  detail::check_inputs({&logits}, "cross_entropy");
  const Real* x = logits.data().data();
  const Real mx = *std::max_element(x, x + k);
  Real total = 0;
  for (std::size_t i = 0; i < k; ++i) total += std::exp(x[i] - mx);
  const Real log_z = mx + std::log(total);
  auto out = new_node<Real>(Shape{}, "cross_entropy");
  out->value.data()[0] = log_z - x[label];
  return finish<Real>(out, detail::should_record({&logits}),
                      [nl = logits.node(), k, label, log_z](auto& self) {
                        Real* gl = grad_of(nl);
                        if (!gl) return;
                        const Real g = self.grad.data()[0];
                        const Real* x = nl->value.data();
                        for (std::size_t i = 0; i < k; ++i) {
                          const Real p = std::exp(x[i] - log_z);
                          gl[i] += g * (p - (i == label ? Real(1) : Real(0)));
                        }
                      });
}

#define TRIPLANE_INSTANTIATE(Real)                                                         \
  template Tensor<Real> softmax(const Tensor<Real>&, std::size_t);                         \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&,               \
                                   const Tensor<Real>&, Real);                             \
  template Tensor<Real> bce_with_logits(const Tensor<Real>&, const Tensor<Real>&, Real);   \
  template Tensor<Real> cross_entropy(const Tensor<Real>&, std::size_t);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
