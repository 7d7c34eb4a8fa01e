#pragma once

// Coarse 3D stream (downsample, compact 3D CNN, upsample) and the fusion
// mixer phi applied to T' + G.

#include "triplane/backbone.hpp"
#include "triplane/layers.hpp"

namespace triplane {

/// Target length ceil(ratio * d), rejecting ratios outside (0, 1].
std::size_t downsampled_length(std::size_t d, double ratio);
/// Block factor 1/ratio when it is an integer, otherwise 0.
std::size_t integral_block_factor(double ratio);

/// Block means over (1/r)-sized blocks when 1/r is an integer, trilinear
/// resampling to ceil(r D) otherwise. r == 1 is the identity.
template <typename Real>
VoxelGrid<Real> downsample(const VoxelGrid<Real>& v, double ratio);

template <typename Real>
Tensor<Real> upsample_to(const Tensor<Real>& g, const Dims& dims);

template <typename Real>
struct VolumeBranch {
  double ratio = 0.5;
  ConvStack<Real> h;

  VolumeBranch() = default;
  /// channels: in, hidden..., C'.
  VolumeBranch(double ratio, const std::vector<std::size_t>& channels, Initializer& init);

  Tensor<Real> encode(const VoxelGrid<Real>& coarse) const { return h.forward(coarse.data); }
  /// G: downsample, encode, upsample back to the input resolution.
  Tensor<Real> forward(const VoxelGrid<Real>& v) const;
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn) { h.visit(prefix + ".h", fn); }
};

/// 1x1x1 convolution block; with no layers it is the identity.
template <typename Real>
struct Mixer {
  std::vector<Tensor<Real>> weights;
  std::vector<Tensor<Real>> biases;

  Mixer() = default;
  /// channels: in, hidden..., out. A single entry yields the identity.
  Mixer(const std::vector<std::size_t>& channels, Initializer& init);

  bool identity() const { return weights.empty(); }
  Tensor<Real> forward(const Tensor<Real>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

/// Y = phi(T' + G); `g` may be undefined when the branch is disabled.
template <typename Real>
Tensor<Real> fuse(const Tensor<Real>& t_prime, const Tensor<Real>& g, const Mixer<Real>& phi);

}  // namespace triplane
