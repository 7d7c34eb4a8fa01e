#pragma once

// Tri-plane backbone: orthogonal mean projections, per-plane 2D encoders and
// broadcast-summation lifting back to a feature volume.

#include <array>
#include <cstddef>

#include "triplane/layers.hpp"
#include "triplane/tensor.hpp"

namespace triplane {

using Dims = std::array<std::size_t, 3>;

/// C x Dx x Dy x Dz volume.
template <typename Real>
struct VoxelGrid {
  Tensor<Real> data;

  VoxelGrid() = default;
  explicit VoxelGrid(Tensor<Real> t);

  std::size_t channels() const { return data.shape()[0]; }
  Dims dims() const { return {data.shape()[1], data.shape()[2], data.shape()[3]}; }
};

/// Planes indexed by the remaining axes in (x, y, z) order:
/// [0] = P_x over (y, z), [1] = P_y over (x, z), [2] = P_z over (x, y).
template <typename Real>
using PlaneTriple = std::array<Tensor<Real>, 3>;

template <typename Real>
PlaneTriple<Real> project_planes(const VoxelGrid<Real>& v);

/// The three 2D encoders g_x, g_y, g_z (or a single shared one).
template <typename Real>
struct PlaneEncoders {
  bool shared = false;
  std::vector<ConvStack<Real>> stacks;

  PlaneEncoders() = default;
  /// channels: in, hidden..., out.
  PlaneEncoders(const std::vector<std::size_t>& channels, bool shared, Initializer& init,
                std::size_t kernel = 3);

  const ConvStack<Real>& encoder(std::size_t axis) const { return stacks[shared ? 0 : axis]; }
  ConvStack<Real>& encoder(std::size_t axis) { return stacks[shared ? 0 : axis]; }
  std::size_t out_channels() const { return stacks.front().out_channels(); }
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

template <typename Real>
struct TriPlaneSet {
  PlaneTriple<Real> features;           // F_x, F_y, F_z
  std::array<Tensor<Real>, 3> lambdas;  // [1] or [C'] each
};

template <typename Real>
PlaneTriple<Real> encode_planes(const PlaneTriple<Real>& planes, const PlaneEncoders<Real>& enc);

/// T(c,i,j,k) = l_x F_x(c,j,k) + l_y F_y(c,i,k) + l_z F_z(c,i,j).
template <typename Real>
Tensor<Real> lift_and_fuse(const TriPlaneSet<Real>& t, const Dims& dims);

/// Encoders plus the learnable lifting weights.
template <typename Real>
struct Backbone {
  PlaneEncoders<Real> encoders;
  std::array<Tensor<Real>, 3> lambdas;

  Backbone() = default;
  Backbone(const std::vector<std::size_t>& channels, bool shared, bool per_channel_lambda,
           Initializer& init);

  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

template <typename Real>
Tensor<Real> backbone_forward(const VoxelGrid<Real>& v, const Backbone<Real>& b);

}  // namespace triplane
