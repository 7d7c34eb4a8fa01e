#pragma once

// Parameter containers shared by the model stages. Each layer owns leaf
// tensors that require gradients and exposes them through `visit` with a
// stable dotted name, which checkpoints and optimizers rely on.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "triplane/tensor.hpp"

namespace triplane {

template <typename Real>
using ParamVisitor = std::function<void(const std::string&, Tensor<Real>&)>;

/// Deterministic parameter initialisation stream.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// Uniform(-b, b) with b = sqrt(6 / fan_in) (He/Kaiming uniform).
  template <typename Real>
  Tensor<Real> he_uniform(const Shape& shape, std::size_t fan_in);
  template <typename Real>
  Tensor<Real> uniform(const Shape& shape, double bound);

 private:
  std::mt19937_64 rng_;
};

/// Sequence of same-padded convolutions (2D or 3D) with relu between layers
/// and no activation after the last one.
template <typename Real>
struct ConvStack {
  std::size_t spatial_dims = 2;
  std::size_t kernel = 3;
  std::vector<std::size_t> channels;  // in, hidden..., out
  std::vector<Tensor<Real>> weights;
  std::vector<Tensor<Real>> biases;

  ConvStack() = default;
  ConvStack(std::size_t spatial_dims, std::size_t kernel, std::vector<std::size_t> channels,
            Initializer& init);

  std::size_t in_channels() const { return channels.front(); }
  std::size_t out_channels() const { return channels.back(); }
  std::size_t layers() const { return weights.size(); }

  Tensor<Real> forward(const Tensor<Real>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

template <typename Real>
struct Linear {
  Tensor<Real> weight;  // out x in
  Tensor<Real> bias;    // out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Initializer& init, bool zero = false);

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }
  Tensor<Real> forward(const Tensor<Real>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

template <typename Real>
struct LayerNorm {
  Tensor<Real> gain;
  Tensor<Real> bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  Tensor<Real> forward(const Tensor<Real>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<Real>& fn);
};

}  // namespace triplane
