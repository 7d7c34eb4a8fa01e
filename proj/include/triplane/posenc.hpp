#pragma once

// Positional modulation: axis tokens, axis-conditioned embeddings and the
// additive weight volumes W_pre and W_post.

#include <array>
#include <vector>

#include "triplane/backbone.hpp"
#include "triplane/config.hpp"
#include "triplane/layers.hpp"

namespace triplane {

/// Per-axis token sequences, each D_k x C.
template <typename Real>
using AxisTokens = std::array<Tensor<Real>, 3>;

/// Per-axis channel profiles, each C x D_k.
template <typename Real>
using AxisProfiles = std::array<Tensor<Real>, 3>;

template <typename Real>
struct AxisEmbeddings {
  AxisProfiles<Real> pre;   // C_in channels
  AxisProfiles<Real> post;  // C' channels
};

/// t_k[i] = mean of V over the two axes other than k at slice i.
template <typename Real>
AxisTokens<Real> summarize_tokens(const VoxelGrid<Real>& v);

/// Normalised coordinates i / (D - 1) as a D x 1 column (0 when D == 1).
template <typename Real>
Tensor<Real> axis_coordinates(std::size_t d);

/// [sin(pi 2^f u), cos(pi 2^f u)] for f < frequencies; D x 2F.
template <typename Real>
Tensor<Real> sinusoidal_features(std::size_t d, std::size_t frequencies);

/// Appends three channels holding the normalised x, y and z coordinates.
template <typename Real>
VoxelGrid<Real> append_coord_channels(const VoxelGrid<Real>& v);

/// W(c,i,j,k) = e_x[c,i] + e_y[c,j] + e_z[c,k].
template <typename Real>
Tensor<Real> build_weight_volume(const AxisProfiles<Real>& e, const Dims& dims);

template <typename Real>
VoxelGrid<Real> pre_modulate(const VoxelGrid<Real>& v, const Tensor<Real>& w_pre);
template <typename Real>
Tensor<Real> post_modulate(const Tensor<Real>& t, const Tensor<Real>& w_post);

/// Pre-norm transformer encoder over the concatenated axis tokens.
template <typename Real>
struct TransformerEncoder {
  struct Block {
    LayerNorm<Real> ln1, ln2;
    Linear<Real> q, k, v, o;
    Linear<Real> ff1, ff2;
  };

  std::size_t heads = 8;
  bool position_embedding = true;
  Linear<Real> embed;
  Tensor<Real> axis_embedding;  // 3 x d
  Tensor<Real> positions;       // max_positions x d
  std::vector<Block> blocks;
  LayerNorm<Real> final_norm;

  TransformerEncoder() = default;
  TransformerEncoder(std::size_t in_channels, const PEConfig& cfg, Initializer& init);

  std::size_t model_dim() const { return embed.out_features(); }

  /// Returns one L x d sequence per axis. When `attention` is non-null it
  /// receives every head's L x L attention matrix, layer by layer.
  std::array<Tensor<Real>, 3> forward(const AxisTokens<Real>& tokens,
                                      std::vector<Tensor<Real>>* attention = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

/// Owns whichever encoder the configured mode needs plus the zero-initialised
/// projection heads for W_pre and W_post.
template <typename Real>
struct PositionalModulation {
  PEMode mode = PEMode::none;
  std::size_t frequencies = 4;
  TransformerEncoder<Real> transformer;
  Linear<Real> pre_head, post_head;              // transformer: shared over axes
  std::array<Linear<Real>, 3> axis_hidden;       // mlp: 1 -> hidden
  std::array<Linear<Real>, 3> axis_pre, axis_post;  // sinusoidal / mlp heads

  PositionalModulation() = default;
  PositionalModulation(const ModelConfig& cfg, Initializer& init);

  /// Embeddings for the volume; undefined profiles for none and coordconv.
  AxisEmbeddings<Real> embed(const VoxelGrid<Real>& v,
                             std::vector<Tensor<Real>>* attention = nullptr) const;
  bool produces_weights() const {
    return mode == PEMode::transformer || mode == PEMode::sinusoidal || mode == PEMode::mlp;
  }
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

}  // namespace triplane
