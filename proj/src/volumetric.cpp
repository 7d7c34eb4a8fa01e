#include "triplane/volumetric.hpp"

#include <cmath>

#include "triplane/error.hpp"
#include "triplane/ops.hpp"

namespace triplane {

std::size_t downsampled_length(std::size_t d, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("downsample: ratio must lie in (0, 1]");
  const double n = std::ceil(ratio * static_cast<double>(d) - 1e-9);
  if (n < 1.0) throw ShapeError("downsample: target dimension collapses to 0");
  return static_cast<std::size_t>(n);
}

std::size_t integral_block_factor(double ratio) {
  const double inv = 1.0 / ratio;
  const double rounded = std::round(inv);
  return std::abs(inv - rounded) < 1e-9 ? static_cast<std::size_t>(rounded) : 0;
}

template <typename Real>
VoxelGrid<Real> downsample(const VoxelGrid<Real>& v, double ratio) {
  const Dims in = v.dims();
  Dims out{};
  for (std::size_t k = 0; k < 3; ++k) out[k] = downsampled_length(in[k], ratio);
  if (out == in) return v;
  if (const std::size_t f = integral_block_factor(ratio); f > 1) {
    Tensor<Real> t = v.data;
    for (std::size_t axis = 1; axis <= 3; ++axis) t = block_mean_axis(t, axis, f);
    return VoxelGrid<Real>(t);
  }
  return VoxelGrid<Real>(trilinear_resize(v.data, out));
}

template <typename Real>
Tensor<Real> upsample_to(const Tensor<Real>& g, const Dims& dims) {
  return trilinear_resize(g, dims);
}

template <typename Real>
VolumeBranch<Real>::VolumeBranch(double r, const std::vector<std::size_t>& channels,
                                 Initializer& init)
    : ratio(r), h(3, 3, channels, init) {
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("volume branch: ratio must lie in (0, 1]");
}

template <typename Real>
Tensor<Real> VolumeBranch<Real>::forward(const VoxelGrid<Real>& v) const {
  return upsample_to(encode(downsample(v, ratio)), v.dims());
}

template <typename Real>
Mixer<Real>::Mixer(const std::vector<std::size_t>& channels, Initializer& init) {
  if (channels.empty()) throw ConfigError("mixer: needs an input width");
  for (std::size_t l = 0; l + 1 < channels.size(); ++l) {
    weights.push_back(init.he_uniform<Real>({channels[l + 1], channels[l], 1, 1, 1}, channels[l]));
    auto b = Tensor<Real>::zeros({channels[l + 1]});
    b.set_requires_grad(true);
    biases.push_back(b);
  }
}

template <typename Real>
Tensor<Real> Mixer<Real>::forward(const Tensor<Real>& x) const {
  Tensor<Real> h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = conv3d(h, weights[l], biases[l]);
    if (l + 1 < weights.size()) h = relu(h);
  }
  return h;
}

template <typename Real>
void Mixer<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    fn(prefix + "." + std::to_string(l) + ".weight", weights[l]);
    fn(prefix + "." + std::to_string(l) + ".bias", biases[l]);
  }
}

template <typename Real>
Tensor<Real> fuse(const Tensor<Real>& t_prime, const Tensor<Real>& g, const Mixer<Real>& phi) {
  if (!g.defined()) return phi.forward(t_prime);
  if (g.shape() != t_prime.shape()) {
    throw ShapeError("fuse: lifted features " + shape_str(t_prime.shape()) +
                     " and volume features " + shape_str(g.shape()) + " differ");
  }
  return phi.forward(add(t_prime, g));
}

#define TRIPLANE_INSTANTIATE(Real)                                                  \
  template VoxelGrid<Real> downsample(const VoxelGrid<Real>&, double);              \
  template Tensor<Real> upsample_to(const Tensor<Real>&, const Dims&);              \
  template struct VolumeBranch<Real>;                                               \
  template struct Mixer<Real>;                                                      \
  template Tensor<Real> fuse(const Tensor<Real>&, const Tensor<Real>&, const Mixer<Real>&);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
