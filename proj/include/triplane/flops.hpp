#pragma once

// Analytic FLOP model. Counts follow the same rules the tensor engine uses
// for its instrumented counter (see flop_costs.hpp), stage by stage, so the
// two agree exactly for a forward pass through TriPlaneModel::logits.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "triplane/backbone.hpp"
#include "triplane/config.hpp"

namespace triplane {

/// Same-padded convolutions; output sizes given. Bias adds included when
/// `bias` is set.
std::uint64_t count_conv2d(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t h,
                           std::size_t w, bool bias = true);
std::uint64_t count_conv3d(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t d,
                           std::size_t h, std::size_t w, bool bias = true);
std::uint64_t count_matmul(std::size_t m, std::size_t k, std::size_t n);
/// y = x W^T + b for `rows` rows.
std::uint64_t count_linear(std::size_t rows, std::size_t in, std::size_t out, bool bias = true);
/// One multi-head self-attention sublayer: q/k/v/o projections, scaled
/// scores, softmax and the weighted sum of values.
std::uint64_t count_attention(std::size_t seq, std::size_t dim, std::size_t heads);

struct StageFlops {
  std::string name;
  std::uint64_t flops = 0;
};

struct FlopsReport {
  std::string label;
  Variant variant = Variant::hybrid;
  Dims dims{};
  std::vector<StageFlops> stages;
  std::uint64_t total = 0;

  std::uint64_t stage(const std::string& name) const;
  /// Sum of the positional-modulation stages (pe_*).
  std::uint64_t pe_flops() const;
  double pe_share() const { return total ? double(pe_flops()) / double(total) : 0.0; }

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Stage order: projection, plane_encoders, lifting, pe_tokens, pe_encoder,
/// pe_heads, pe_weight_volume, pe_modulation, volume_branch, fusion, mixer,
/// task_head, dense3d. Stages that do not apply are reported as zero.
FlopsReport count_model(const ModelConfig& config, const Dims& dims, std::string label = "");

struct Comparison {
  std::vector<FlopsReport> reports;  // sorted by total, ascending
  /// ratio[i][j] = total_i / total_j
  std::vector<std::vector<double>> ratio;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

Comparison compare(const std::vector<std::pair<std::string, ModelConfig>>& configs,
                   const Dims& dims);

}  // namespace triplane
