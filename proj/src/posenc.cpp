#include "triplane/posenc.hpp"

#include <cmath>
#include <numbers>

#include "triplane/error.hpp"
#include "triplane/ops.hpp"

namespace triplane {

template <typename Real>
AxisTokens<Real> summarize_tokens(const VoxelGrid<Real>& v) {
  const Tensor<Real> xy = mean_axis(v.data, 3);  // C x Dx x Dy
  const Tensor<Real> xz = mean_axis(v.data, 2);  // C x Dx x Dz
  return {transpose(mean_axis(xy, 2)), transpose(mean_axis(xy, 1)), transpose(mean_axis(xz, 1))};
}

template <typename Real>
Tensor<Real> axis_coordinates(std::size_t d) {
  if (d == 0) throw ShapeError("axis_coordinates: empty axis");
  std::vector<Real> u(d, Real(0));
  for (std::size_t i = 0; i < d && d > 1; ++i) {
    u[i] = static_cast<Real>(static_cast<double>(i) / static_cast<double>(d - 1));
  }
  return Tensor<Real>::from({d, 1}, std::span<const Real>(u));
}

template <typename Real>
Tensor<Real> sinusoidal_features(std::size_t d, std::size_t frequencies) {
  if (d == 0) throw ShapeError("sinusoidal_features: empty axis");
  std::vector<Real> f(d * 2 * frequencies);
  for (std::size_t i = 0; i < d; ++i) {
    const double u = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    for (std::size_t q = 0; q < frequencies; ++q) {
      const double w = std::numbers::pi * std::ldexp(1.0, static_cast<int>(q));
      f[i * 2 * frequencies + 2 * q] = static_cast<Real>(std::sin(w * u));
      f[i * 2 * frequencies + 2 * q + 1] = static_cast<Real>(std::cos(w * u));
    }
  }
  return Tensor<Real>::from({d, 2 * frequencies}, std::span<const Real>(f));
}

template <typename Real>
VoxelGrid<Real> append_coord_channels(const VoxelGrid<Real>& v) {
  const Dims n = v.dims();
  const std::size_t per = n[0] * n[1] * n[2];
  std::vector<Real> coords(3 * per);
  auto norm = [](std::size_t i, std::size_t d) {
    return d > 1 ? static_cast<Real>(static_cast<double>(i) / static_cast<double>(d - 1)) : Real(0);
  };
  for (std::size_t i = 0; i < n[0]; ++i) {
    for (std::size_t j = 0; j < n[1]; ++j) {
      for (std::size_t k = 0; k < n[2]; ++k) {
        const std::size_t at = (i * n[1] + j) * n[2] + k;
        coords[at] = norm(i, n[0]);
        coords[per + at] = norm(j, n[1]);
        coords[2 * per + at] = norm(k, n[2]);
      }
    }
  }
  auto c = Tensor<Real>::from({3, n[0], n[1], n[2]}, std::span<const Real>(coords));
  return VoxelGrid<Real>(concat<Real>({v.data, c}, 0));
}

template <typename Real>
Tensor<Real> build_weight_volume(const AxisProfiles<Real>& e, const Dims& dims) {
  for (const auto& p : e) {
    if (!p.defined() || p.dim() != 2) throw ShapeError("build_weight_volume: profiles must be C x D");
  }
  const std::size_t c = e[0].shape()[0];
  for (std::size_t k = 0; k < 3; ++k) {
    if (e[k].shape() != Shape{c, dims[k]}) {
      throw ShapeError("build_weight_volume: profile " + std::to_string(k) + " has shape " +
                       shape_str(e[k].shape()) + ", expected " + shape_str({c, dims[k]}));
    }
  }
  // Each profile C x D_k is replicated over the two missing axes.
  Tensor<Real> wx = broadcast_axis(broadcast_axis(e[0], 2, dims[1]), 3, dims[2]);
  Tensor<Real> wy = broadcast_axis(broadcast_axis(e[1], 1, dims[0]), 3, dims[2]);
  Tensor<Real> wz = broadcast_axis(broadcast_axis(e[2], 1, dims[0]), 2, dims[1]);
  return add(add(wx, wy), wz);
}

template <typename Real>
VoxelGrid<Real> pre_modulate(const VoxelGrid<Real>& v, const Tensor<Real>& w_pre) {
  if (w_pre.shape() != v.data.shape()) {
    throw ShapeError("pre_modulate: weight volume " + shape_str(w_pre.shape()) +
                     " does not match input " + shape_str(v.data.shape()));
  }
  return VoxelGrid<Real>(add(v.data, w_pre));
}

template <typename Real>
Tensor<Real> post_modulate(const Tensor<Real>& t, const Tensor<Real>& w_post) {
  if (w_post.shape() != t.shape()) {
    throw ShapeError("post_modulate: weight volume " + shape_str(w_post.shape()) +
                     " does not match features " + shape_str(t.shape()));
  }
  return add(t, w_post);
}

template <typename Real>
TransformerEncoder<Real>::TransformerEncoder(std::size_t in_channels, const PEConfig& cfg,
                                             Initializer& init)
    : heads(cfg.heads), position_embedding(cfg.position_embedding) {
  const std::size_t d = cfg.model_dim;
  if (d == 0 || cfg.heads == 0 || d % cfg.heads != 0) {
    throw ConfigError("transformer: model_dim must be a positive multiple of heads");
  }
  embed = Linear<Real>(in_channels, d, init);
  axis_embedding = init.uniform<Real>({3, d}, 0.1);
  positions = init.uniform<Real>({cfg.max_positions, d}, 0.1);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Block b;
    b.ln1 = LayerNorm<Real>(d);
    b.ln2 = LayerNorm<Real>(d);
    b.q = Linear<Real>(d, d, init);
    b.k = Linear<Real>(d, d, init);
    b.v = Linear<Real>(d, d, init);
    b.o = Linear<Real>(d, d, init);
    b.ff1 = Linear<Real>(d, cfg.ffn_mult * d, init);
    b.ff2 = Linear<Real>(cfg.ffn_mult * d, d, init);
    blocks.push_back(std::move(b));
  }
  final_norm = LayerNorm<Real>(d);
}

template <typename Real>
std::array<Tensor<Real>, 3> TransformerEncoder<Real>::forward(
    const AxisTokens<Real>& tokens, std::vector<Tensor<Real>>* attention) const {
  const std::size_t d = model_dim();
  std::array<std::size_t, 3> lengths{};
  std::vector<Tensor<Real>> parts;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t len = tokens[k].shape()[0];
    lengths[k] = len;
    if (position_embedding && len > positions.shape()[0]) {
      throw ShapeError("transformer: axis length " + std::to_string(len) +
                       " exceeds max_positions " + std::to_string(positions.shape()[0]));
    }
    Tensor<Real> h = embed.forward(tokens[k]);
    h = add(h, broadcast_axis(reshape(slice(axis_embedding, 0, k, 1), {d}), 0, len));
    if (position_embedding) h = add(h, slice(positions, 0, 0, len));
    parts.push_back(h);
  }
  Tensor<Real> x = concat(parts, 0);
  const std::size_t dh = d / heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  for (const Block& b : blocks) {
    const Tensor<Real> a = b.ln1.forward(x);
    const Tensor<Real> q = b.q.forward(a), k = b.k.forward(a), v = b.v.forward(a);
    std::vector<Tensor<Real>> outs;
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor<Real> qh = slice(q, 1, h * dh, dh);
      const Tensor<Real> kh = slice(k, 1, h * dh, dh);
      const Tensor<Real> vh = slice(v, 1, h * dh, dh);
      const Tensor<Real> p = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
      if (attention) attention->push_back(p);
      outs.push_back(matmul(p, vh));
    }
    x = add(x, b.o.forward(concat(outs, 1)));
    x = add(x, b.ff2.forward(relu(b.ff1.forward(b.ln2.forward(x)))));
  }
  x = final_norm.forward(x);
  return {slice(x, 0, 0, lengths[0]), slice(x, 0, lengths[0], lengths[1]),
          slice(x, 0, lengths[0] + lengths[1], lengths[2])};
}

template <typename Real>
void TransformerEncoder<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  embed.visit(prefix + ".embed", fn);
  fn(prefix + ".axis_embedding", axis_embedding);
  if (position_embedding) fn(prefix + ".positions", positions);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    Block& b = blocks[l];
    b.ln1.visit(p + ".ln1", fn);
    b.q.visit(p + ".q", fn);
    b.k.visit(p + ".k", fn);
    b.v.visit(p + ".v", fn);
    b.o.visit(p + ".o", fn);
    b.ln2.visit(p + ".ln2", fn);
    b.ff1.visit(p + ".ff1", fn);
    b.ff2.visit(p + ".ff2", fn);
  }
  final_norm.visit(prefix + ".final_norm", fn);
}

template <typename Real>
PositionalModulation<Real>::PositionalModulation(const ModelConfig& cfg, Initializer& init)
    : mode(cfg.uses_pe() ? cfg.pe.mode : PEMode::none), frequencies(cfg.pe.frequencies) {
  const std::size_t c_pre = cfg.in_channels;
  const std::size_t c_post = cfg.feature_channels;
  switch (mode) {
    case PEMode::transformer:
      transformer = TransformerEncoder<Real>(cfg.in_channels, cfg.pe, init);
      pre_head = Linear<Real>(cfg.pe.model_dim, c_pre, init, true);
      post_head = Linear<Real>(cfg.pe.model_dim, c_post, init, true);
      break;
    case PEMode::sinusoidal:
      for (std::size_t k = 0; k < 3; ++k) {
        axis_pre[k] = Linear<Real>(2 * frequencies, c_pre, init, true);
        axis_post[k] = Linear<Real>(2 * frequencies, c_post, init, true);
      }
      break;
    case PEMode::mlp:
      for (std::size_t k = 0; k < 3; ++k) {
        axis_hidden[k] = Linear<Real>(1, cfg.pe.mlp_hidden, init);
        axis_pre[k] = Linear<Real>(cfg.pe.mlp_hidden, c_pre, init, true);
        axis_post[k] = Linear<Real>(cfg.pe.mlp_hidden, c_post, init, true);
      }
      break;
    case PEMode::none:
    case PEMode::coordconv:
      break;
  }
}

template <typename Real>
AxisEmbeddings<Real> PositionalModulation<Real>::embed(const VoxelGrid<Real>& v,
                                                       std::vector<Tensor<Real>>* attention) const {
  AxisEmbeddings<Real> e;
  const Dims dims = v.dims();
  switch (mode) {
    case PEMode::transformer: {
      const auto seq = transformer.forward(summarize_tokens(v), attention);
      for (std::size_t k = 0; k < 3; ++k) {
        e.pre[k] = transpose(pre_head.forward(seq[k]));
        e.post[k] = transpose(post_head.forward(seq[k]));
      }
      break;
    }
    case PEMode::sinusoidal:
      for (std::size_t k = 0; k < 3; ++k) {
        const Tensor<Real> f = sinusoidal_features<Real>(dims[k], frequencies);
        e.pre[k] = transpose(axis_pre[k].forward(f));
        e.post[k] = transpose(axis_post[k].forward(f));
      }
      break;
    case PEMode::mlp:
      for (std::size_t k = 0; k < 3; ++k) {
        const Tensor<Real> h = relu(axis_hidden[k].forward(axis_coordinates<Real>(dims[k])));
        e.pre[k] = transpose(axis_pre[k].forward(h));
        e.post[k] = transpose(axis_post[k].forward(h));
      }
      break;
    case PEMode::none:
    case PEMode::coordconv:
      break;
  }
  return e;
}

template <typename Real>
void PositionalModulation<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  const char* names[] = {"x", "y", "z"};
  switch (mode) {
    case PEMode::transformer:
      transformer.visit(prefix + ".transformer", fn);
      pre_head.visit(prefix + ".pre_head", fn);
      post_head.visit(prefix + ".post_head", fn);
      break;
    case PEMode::mlp:
      for (std::size_t k = 0; k < 3; ++k) axis_hidden[k].visit(prefix + ".hidden_" + names[k], fn);
      [[fallthrough]];
    case PEMode::sinusoidal:
      for (std::size_t k = 0; k < 3; ++k) {
        axis_pre[k].visit(prefix + ".pre_" + names[k], fn);
        axis_post[k].visit(prefix + ".post_" + names[k], fn);
      }
      break;
    case PEMode::none:
    case PEMode::coordconv:
      break;
  }
}

#define TRIPLANE_INSTANTIATE(Real)                                                         \
  template AxisTokens<Real> summarize_tokens(const VoxelGrid<Real>&);                      \
  template Tensor<Real> axis_coordinates<Real>(std::size_t);                               \
  template Tensor<Real> sinusoidal_features<Real>(std::size_t, std::size_t);               \
  template VoxelGrid<Real> append_coord_channels(const VoxelGrid<Real>&);                  \
  template Tensor<Real> build_weight_volume(const AxisProfiles<Real>&, const Dims&);       \
  template VoxelGrid<Real> pre_modulate(const VoxelGrid<Real>&, const Tensor<Real>&);      \
  template Tensor<Real> post_modulate(const Tensor<Real>&, const Tensor<Real>&);           \
  template struct TransformerEncoder<Real>;                                                \
  template struct PositionalModulation<Real>;

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
