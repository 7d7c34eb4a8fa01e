#pragma once

// The three model variants behind one interface:
//   backbone : phi(T)
//   hybrid   : phi(T' + G) with positional modulation and the coarse 3D stream
//   dense3d  : full-resolution 3D U-stack followed by phi

#include <string>
#include <vector>

#include "triplane/backbone.hpp"
#include "triplane/config.hpp"
#include "triplane/posenc.hpp"
#include "triplane/volumetric.hpp"

namespace triplane {

template <typename Real>
class TriPlaneModel {
 public:
  explicit TriPlaneModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// Per-voxel head output, C_head x Dx x Dy x Dz.
  Tensor<Real> forward(const VoxelGrid<Real>& v) const;
  /// Completion: per-voxel logits (1 x D^3). Classification: class logits [K]
  /// by global average pooling of the head output.
  Tensor<Real> logits(const VoxelGrid<Real>& v) const;

  /// Runs the plane and volume streams on separate threads when no tape is
  /// active (inference only).
  void set_concurrent_streams(bool enabled) { concurrent_ = enabled; }
  bool concurrent_streams() const { return concurrent_; }

  void visit(const ParamVisitor<Real>& fn);
  std::vector<std::pair<std::string, Tensor<Real>>> parameters();
  std::size_t parameter_count();

  Backbone<Real>& backbone() { return backbone_; }
  PositionalModulation<Real>& modulation() { return pe_; }
  VolumeBranch<Real>& branch() { return branch_; }
  Mixer<Real>& mixer() { return mixer_; }

 private:
  Tensor<Real> hybrid_forward(const VoxelGrid<Real>& v) const;
  Tensor<Real> dense_forward(const VoxelGrid<Real>& v) const;

  ModelConfig config_;
  bool concurrent_ = false;
  Backbone<Real> backbone_;
  PositionalModulation<Real> pe_;
  VolumeBranch<Real> branch_;
  std::vector<ConvStack<Real>> dense_;  // stem, skip, coarse, merge
  Mixer<Real> mixer_;
};

}  // namespace triplane
