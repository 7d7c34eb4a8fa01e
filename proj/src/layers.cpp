#include "triplane/layers.hpp"

#include <algorithm>
#include <cmath>

#include "triplane/error.hpp"
#include "triplane/ops.hpp"

namespace triplane {

template <typename Real>
Tensor<Real> Initializer::uniform(const Shape& shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng_));
  auto t = Tensor<Real>::from(shape, std::span<const Real>(v));
  t.set_requires_grad(true);
  return t;
}

template <typename Real>
Tensor<Real> Initializer::he_uniform(const Shape& shape, std::size_t fan_in) {
  return uniform<Real>(shape, std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1))));
}

namespace {

template <typename Real>
Tensor<Real> param_zeros(const Shape& shape) {
  auto t = Tensor<Real>::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <typename Real>
ConvStack<Real>::ConvStack(std::size_t dims, std::size_t k, std::vector<std::size_t> ch,
                           Initializer& init)
    : spatial_dims(dims), kernel(k), channels(std::move(ch)) {
  if (dims != 2 && dims != 3) throw ConfigError("conv stack: spatial dims must be 2 or 3");
  if (k % 2 == 0) throw ConfigError("conv stack: kernel size must be odd");
  if (channels.size() < 2) throw ConfigError("conv stack: needs at least one layer");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("conv stack: zero channel width");
  }
  for (std::size_t l = 0; l + 1 < channels.size(); ++l) {
    Shape shape{channels[l + 1], channels[l], k, k};
    std::size_t fan_in = channels[l] * k * k;
    if (dims == 3) {
      shape.push_back(k);
      fan_in *= k;
    }
    weights.push_back(init.he_uniform<Real>(shape, fan_in));
    biases.push_back(param_zeros<Real>({channels[l + 1]}));
  }
}

template <typename Real>
Tensor<Real> ConvStack<Real>::forward(const Tensor<Real>& x) const {
  const std::size_t pad = kernel / 2;
  Tensor<Real> h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = spatial_dims == 2 ? conv2d(h, weights[l], biases[l], 1, pad)
                          : conv3d(h, weights[l], biases[l], 1, pad);
    if (l + 1 < weights.size()) h = relu(h);
  }
  return h;
}

template <typename Real>
void ConvStack<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    fn(prefix + "." + std::to_string(l) + ".weight", weights[l]);
    fn(prefix + "." + std::to_string(l) + ".bias", biases[l]);
  }
}

template <typename Real>
Linear<Real>::Linear(std::size_t in, std::size_t out, Initializer& init, bool zero) {
  if (in == 0 || out == 0) throw ConfigError("linear: zero width");
  if (zero) {
    weight = param_zeros<Real>({out, in});
  } else {
    weight = init.uniform<Real>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)));
  }
  bias = param_zeros<Real>({out});
}

template <typename Real>
Tensor<Real> Linear<Real>::forward(const Tensor<Real>& x) const {
  return linear(x, weight, bias);
}

template <typename Real>
void Linear<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

template <typename Real>
LayerNorm<Real>::LayerNorm(std::size_t width)
    : gain(Tensor<Real>::full({width}, Real(1))), bias(Tensor<Real>::zeros({width})) {
  gain.set_requires_grad(true);
  bias.set_requires_grad(true);
}

template <typename Real>
Tensor<Real> LayerNorm<Real>::forward(const Tensor<Real>& x) const {
  return layer_norm(x, gain, bias);
}

template <typename Real>
void LayerNorm<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  fn(prefix + ".gain", gain);
  fn(prefix + ".bias", bias);
}

template Tensor<float> Initializer::uniform<float>(const Shape&, double);
template Tensor<double> Initializer::uniform<double>(const Shape&, double);
template Tensor<float> Initializer::he_uniform<float>(const Shape&, std::size_t);
template Tensor<double> Initializer::he_uniform<double>(const Shape&, std::size_t);
template struct ConvStack<float>;
template struct ConvStack<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;

}  // namespace triplane
