#pragma once

// Differentiable tensor operations. Every op records itself on the active
// tape of the calling thread when one of its inputs requires a gradient.
// Binary elementwise ops require equal shapes; the only implicit broadcast is
// a one-element right operand.

#include <array>
#include <cstddef>
#include <vector>

#include "triplane/tensor.hpp"

namespace triplane {

// --- elementwise -----------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);
template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real value);
template <typename Real>
Tensor<Real> negate(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> relu(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a);

/// y[c, ...] = w[c] * x[c, ...]; w has one element or x.shape[0] elements.
template <typename Real>
Tensor<Real> scale_channels(const Tensor<Real>& x, const Tensor<Real>& w);

// --- reductions ------------------------------------------------------------

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);

/// Arithmetic mean over `axis`; the axis is removed from the output.
template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, std::size_t axis);

/// Inserts a new axis of length `size` at position `axis` and replicates `x`
/// along it. Inverse-shaped partner of mean_axis.
template <typename Real>
Tensor<Real> broadcast_axis(const Tensor<Real>& x, std::size_t axis, std::size_t size);

/// Means over consecutive blocks of `factor` entries along `axis`; the last
/// block may be partial. Output length is ceil(D / factor).
template <typename Real>
Tensor<Real> block_mean_axis(const Tensor<Real>& x, std::size_t axis, std::size_t factor);

/// x: C x ... -> [C], mean over every non-channel entry.
template <typename Real>
Tensor<Real> global_avg_pool(const Tensor<Real>& x);

// --- shape -----------------------------------------------------------------

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, const Shape& shape);
template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, std::size_t axis, std::size_t start, std::size_t length);
template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis);

// --- linear algebra --------------------------------------------------------

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

/// x[n x in] * w[out x in]^T + b[out]; `b` may be undefined.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b);

/// Cross-correlation with zero padding. x: C_in x H x W,
/// w: C_out x C_in x k x k (k odd), bias: [C_out] or undefined.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias,
                    std::size_t stride = 1, std::size_t pad = 0);

/// 3D analogue of conv2d. x: C_in x D x H x W, w: C_out x C_in x k x k x k.
template <typename Real>
Tensor<Real> conv3d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias,
                    std::size_t stride = 1, std::size_t pad = 0);

// --- resampling ------------------------------------------------------------

/// Linear resampling of one axis with half-pixel centres: output sample d
/// reads source coordinate (d + 0.5) * in / out - 0.5. Samples past the
/// outermost centres extrapolate the boundary segment, so affine fields are
/// reproduced exactly. Same-size resampling is the identity.
template <typename Real>
Tensor<Real> resize_axis_linear(const Tensor<Real>& x, std::size_t axis, std::size_t size);

/// Trilinear resize of a C x D x H x W volume (separable linear passes over
/// W, H then D).
template <typename Real>
Tensor<Real> trilinear_resize(const Tensor<Real>& x, const std::array<std::size_t, 3>& size);

// --- normalisation ---------------------------------------------------------

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);

/// Normalises over the last axis, then applies gain and bias of that length.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps = Real(1e-5));

// --- losses ----------------------------------------------------------------

/// Mean voxel-wise binary cross-entropy on logits; `target` is a constant.
template <typename Real>
Tensor<Real> bce_with_logits(const Tensor<Real>& logits, const Tensor<Real>& target,
                             Real positive_weight = Real(1));

/// Softmax cross-entropy of a logit vector against a class index.
template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::size_t label);

}  // namespace triplane
