#include "triplane/backbone.hpp"

#include "triplane/error.hpp"
#include "triplane/ops.hpp"

namespace triplane {

template <typename Real>
VoxelGrid<Real>::VoxelGrid(Tensor<Real> t) : data(std::move(t)) {
  if (!data.defined() || data.dim() != 4) {
    throw ShapeError("voxel grid: expects C x Dx x Dy x Dz data");
  }
  for (std::size_t d : data.shape()) {
    if (d == 0) throw ShapeError("voxel grid: zero-sized dimension in " + shape_str(data.shape()));
  }
}

template <typename Real>
PlaneTriple<Real> project_planes(const VoxelGrid<Real>& v) {
  return {mean_axis(v.data, 1), mean_axis(v.data, 2), mean_axis(v.data, 3)};
}

template <typename Real>
PlaneEncoders<Real>::PlaneEncoders(const std::vector<std::size_t>& channels, bool shared_weights,
                                   Initializer& init, std::size_t kernel)
    : shared(shared_weights) {
  for (std::size_t k = 0; k < (shared ? 1u : 3u); ++k) {
    stacks.emplace_back(2, kernel, channels, init);
  }
}

template <typename Real>
void PlaneEncoders<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  if (shared) {
    stacks[0].visit(prefix + ".shared", fn);
    return;
  }
  const char* names[] = {"x", "y", "z"};
  for (std::size_t k = 0; k < 3; ++k) stacks[k].visit(prefix + "." + names[k], fn);
}

template <typename Real>
PlaneTriple<Real> encode_planes(const PlaneTriple<Real>& planes, const PlaneEncoders<Real>& enc) {
  for (const auto& p : planes) {
    if (!p.defined() || p.dim() != 3) throw ShapeError("encode_planes: planes must be C x H x W");
  }
  // P_x: (y,z), P_y: (x,z), P_z: (x,y) must agree on every shared axis.
  const Shape& px = planes[0].shape();
  const Shape& py = planes[1].shape();
  const Shape& pz = planes[2].shape();
  if (px[0] != py[0] || px[0] != pz[0] || py[1] != pz[1] || px[1] != pz[2] || px[2] != py[2]) {
    throw ShapeError("encode_planes: inconsistent planes " + shape_str(px) + ", " + shape_str(py) +
                     ", " + shape_str(pz));
  }
  PlaneTriple<Real> out;
  for (std::size_t k = 0; k < 3; ++k) out[k] = enc.encoder(k).forward(planes[k]);
  return out;
}

template <typename Real>
Tensor<Real> lift_and_fuse(const TriPlaneSet<Real>& t, const Dims& dims) {
  const auto& f = t.features;
  for (const auto& p : f) {
    if (!p.defined() || p.dim() != 3) throw ShapeError("lift_and_fuse: planes must be C x H x W");
  }
  const std::size_t c = f[0].shape()[0];
  const Shape ex{c, dims[1], dims[2]}, ey{c, dims[0], dims[2]}, ez{c, dims[0], dims[1]};
  if (f[0].shape() != ex || f[1].shape() != ey || f[2].shape() != ez) {
    throw ShapeError("lift_and_fuse: planes " + shape_str(f[0].shape()) + ", " +
                     shape_str(f[1].shape()) + ", " + shape_str(f[2].shape()) +
                     " do not match volume " + std::to_string(dims[0]) + "x" +
                     std::to_string(dims[1]) + "x" + std::to_string(dims[2]));
  }
  Tensor<Real> acc;
  for (std::size_t k = 0; k < 3; ++k) {
    Tensor<Real> lifted = broadcast_axis(scale_channels(f[k], t.lambdas[k]), k + 1, dims[k]);
    acc = acc.defined() ? add(acc, lifted) : lifted;
  }
  return acc;
}

template <typename Real>
Backbone<Real>::Backbone(const std::vector<std::size_t>& channels, bool shared,
                         bool per_channel_lambda, Initializer& init)
    : encoders(channels, shared, init) {
  const std::size_t n = per_channel_lambda ? channels.back() : 1;
  for (auto& l : lambdas) {
    l = Tensor<Real>::full({n}, Real(1) / Real(3));
    l.set_requires_grad(true);
  }
}

template <typename Real>
void Backbone<Real>::visit(const std::string& prefix, const ParamVisitor<Real>& fn) {
  encoders.visit(prefix + ".encoder", fn);
  const char* names[] = {"lambda_x", "lambda_y", "lambda_z"};
  for (std::size_t k = 0; k < 3; ++k) fn(prefix + "." + names[k], lambdas[k]);
}

template <typename Real>
Tensor<Real> backbone_forward(const VoxelGrid<Real>& v, const Backbone<Real>& b) {
  TriPlaneSet<Real> set{encode_planes(project_planes(v), b.encoders), b.lambdas};
  return lift_and_fuse(set, v.dims());
}

#define TRIPLANE_INSTANTIATE(Real)                                                          \
  template struct VoxelGrid<Real>;                                                          \
  template struct PlaneEncoders<Real>;                                                      \
  template struct Backbone<Real>;                                                           \
  template PlaneTriple<Real> project_planes(const VoxelGrid<Real>&);                        \
  template PlaneTriple<Real> encode_planes(const PlaneTriple<Real>&, const PlaneEncoders<Real>&); \
  template Tensor<Real> lift_and_fuse(const TriPlaneSet<Real>&, const Dims&);               \
  template Tensor<Real> backbone_forward(const VoxelGrid<Real>&, const Backbone<Real>&);

TRIPLANE_INSTANTIATE(float)
TRIPLANE_INSTANTIATE(double)
#undef TRIPLANE_INSTANTIATE

}  // namespace triplane
