#include "triplane/model.hpp"

#include <exception>
#include <thread>

#include "triplane/error.hpp"
#include "triplane/ops.hpp"

namespace triplane {

namespace {

std::vector<std::size_t> mixer_channels(std::size_t in, std::size_t layers, std::size_t out) {
  std::vector<std::size_t> ch(1, in);
  for (std::size_t l = 1; l < layers; ++l) ch.push_back(in);
  if (layers > 0) ch.push_back(out);
  return ch;
}

}  // namespace

template <typename Real>
TriPlaneModel<Real>::TriPlaneModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Initializer init(config_.seed);
  const std::size_t c_head = config_.head_channels();
  if (config_.variant == Variant::dense3d) {
    const std::size_t w = config_.dense_width;
    dense_.emplace_back(3, 3, std::vector<std::size_t>{config_.in_channels, w}, init);
    dense_.emplace_back(3, 3, std::vector<std::size_t>{w, w}, init);
    dense_.emplace_back(3, 3, std::vector<std::size_t>{w, w}, init);
    dense_.emplace_back(3, 3, std::vector<std::size_t>{w, w}, init);
    mixer_ = Mixer<Real>(mixer_channels(w, config_.mixer_layers, c_head), init);
    return;
  }
  std::vector<std::size_t> plane{config_.plane_in_channels()};
  plane.insert(plane.end(), config_.plane_hidden.begin(), config_.plane_hidden.end());
  plane.push_back(config_.feature_channels);
  backbone_ = Backbone<Real>(plane, config_.shared_plane_encoders, config_.per_channel_lambda, init);
  pe_ = PositionalModulation<Real>(config_, init);
  if (config_.uses_branch()) {
    const bool coord_input =
        config_.branch.use_modulated_input && pe_.mode == PEMode::coordconv;
    std::vector<std::size_t> ch{config_.in_channels + (coord_input ? 3 : 0)};
    ch.insert(ch.end(), config_.branch.hidden.begin(), config_.branch.hidden.end());
    ch.push_back(config_.feature_channels);
    branch_ = VolumeBranch<Real>(config_.branch.ratio, ch, init);
  }
  mixer_ = Mixer<Real>(mixer_channels(config_.feature_channels, config_.mixer_layers, c_head), init);
}

template <typename Real>
Tensor<Real> TriPlaneModel<Real>::forward(const VoxelGrid<Real>& v) const {
  if (v.channels() != config_.in_channels) {
    throw ShapeError("model expects " + std::to_string(config_.in_channels) +
                     " input channels, got " + std::to_string(v.channels()));
  }
  return config_.variant == Variant::dense3d ? dense_forward(v) : hybrid_forward(v);
}

template <typename Real>
Tensor<Real> TriPlaneModel<Real>::logits(const VoxelGrid<Real>& v) const {
  Tensor<Real> y = forward(v);
  return config_.task == TaskKind::classify ? global_avg_pool(y) : y;
}

template <typename Real>
Tensor<Real> TriPlaneModel<Real>::hybrid_forward(const VoxelGrid<Real>& v) const {
  const Dims dims = v.dims();
  VoxelGrid<Real> modulated = v;
  AxisEmbeddings<Real> e;
  if (pe_.mode == PEMode::coordconv) {
    modulated = append_coord_channels(v);
  } else if (pe_.produces_weights()) {
    e = pe_.embed(v);
    modulated = pre_modulate(v, build_weight_volume(e.pre, dims));
  }

  Tensor<Real> g;
  std::exception_ptr branch_error;
  const VoxelGrid<Real>& branch_input = config_.branch.use_modulated_input ? modulated : v;
  auto run_branch = [&] {
    try {
      g = branch_.forward(branch_input);
    } catch (...) {
      branch_error = std::current_exception();
    }
  };
  std::thread worker;
  const bool with_branch = config_.uses_branch();
  const bool parallel = with_branch && concurrent_ && Tape<Real>::active() == nullptr;
  if (parallel) worker = std::thread(run_branch);

  Tensor<Real> t = backbone_forward(modulated, backbone_);
  if (pe_.produces_weights()) t = post_modulate(t, build_weight_volume(e.post, dims));

  if (parallel) {
    worker.join();
  } else if (with_branch) {
    run_branch();
  }
  if (branch_error) std::rethrow_exception(branch_error);
  return fuse(t, g, mixer_);
}

template <typename Real>
Tensor<Real> TriPlaneModel<Real>::dense_forward(const VoxelGrid<Real>& v) const {
  const Tensor<Real> stem = relu(dense_[0].forward(v.data));
  const Tensor<Real> skip = relu(dense_[1].forward(stem));
  Tensor<Real> coarse = skip;
  for (std::size_t axis = 1; axis <= 3; ++axis) coarse = block_mean_axis(coarse, axis, 2);
  coarse = relu(dense_[2].forward(coarse));
  const Tensor<Real> up = trilinear_resize(coarse, v.dims());
  const Tensor<Real> merged = relu(dense_[3].forward(add(up, skip)));
  return mixer_.forward(merged);
}

template <typename Real>
void TriPlaneModel<Real>::visit(const ParamVisitor<Real>& fn) {
  if (config_.variant == Variant::dense3d) {
    const char* names[] = {"dense.stem", "dense.skip", "dense.coarse", "dense.merge"};
    for (std::size_t i = 0; i < dense_.size(); ++i) dense_[i].visit(names[i], fn);
  } else {
    backbone_.visit("backbone", fn);
    pe_.visit("pe", fn);
    if (config_.uses_branch()) branch_.visit("branch", fn);
  }
  mixer_.visit("mixer", fn);
}

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>>> TriPlaneModel<Real>::parameters() {
  std::vector<std::pair<std::string, Tensor<Real>>> out;
  visit([&](const std::string& name, Tensor<Real>& t) { out.emplace_back(name, t); });
  return out;
}

template <typename Real>
std::size_t TriPlaneModel<Real>::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor<Real>& t) { n += t.numel(); });
  return n;
}

template class TriPlaneModel<float>;
template class TriPlaneModel<double>;

}  // namespace triplane
