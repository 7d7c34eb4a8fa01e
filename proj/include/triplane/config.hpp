#pragma once

// Model configuration and its strict JSON form. Parsing starts from the
// defaults of the declared variant and overrides the fields that are
// present; unknown keys are rejected.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace triplane {

enum class Variant { backbone, hybrid, dense3d };
enum class TaskKind { classify, complete };
enum class PEMode { none, sinusoidal, coordconv, mlp, transformer };

std::string to_string(Variant v);
std::string to_string(TaskKind t);
std::string to_string(PEMode m);
Variant parse_variant(const std::string& s);
TaskKind parse_task(const std::string& s);
PEMode parse_pe_mode(const std::string& s);

struct PEConfig {
  PEMode mode = PEMode::none;
  std::size_t model_dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 8;
  std::size_t ffn_mult = 2;
  std::size_t max_positions = 512;
  bool position_embedding = true;
  std::size_t frequencies = 4;  // sinusoidal
  std::size_t mlp_hidden = 16;  // mlp

  bool operator==(const PEConfig&) const = default;
};

struct BranchConfig {
  bool enabled = false;
  double ratio = 0.5;
  std::vector<std::size_t> hidden{8, 8};
  bool use_modulated_input = false;

  bool operator==(const BranchConfig&) const = default;
};

struct ModelConfig {
  Variant variant = Variant::hybrid;
  TaskKind task = TaskKind::complete;
  std::array<std::size_t, 3> dims{32, 32, 32};
  std::size_t in_channels = 1;
  std::size_t feature_channels = 16;
  std::vector<std::size_t> plane_hidden{16, 16};
  bool shared_plane_encoders = false;
  bool per_channel_lambda = false;
  std::size_t mixer_layers = 2;  // 0 makes the mixer the identity
  std::size_t num_classes = 4;
  std::size_t dense_width = 16;
  PEConfig pe;
  BranchConfig branch;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;

  /// Output channels of the mixer: 1 for completion, num_classes for
  /// classification.
  std::size_t head_channels() const;
  /// Channels entering the plane encoders (coordconv appends three).
  std::size_t plane_in_channels() const;
  bool uses_pe() const { return variant == Variant::hybrid && pe.mode != PEMode::none; }
  bool uses_branch() const { return variant == Variant::hybrid && branch.enabled; }

  /// Throws ConfigError on any inconsistency.
  void validate() const;

  static ModelConfig defaults(Variant variant);
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
ModelConfig load_model_config(const std::string& path);
void save_model_config(const ModelConfig& c, const std::string& path);

/// FNV-1a over the canonical JSON dump.
std::uint64_t config_hash(const ModelConfig& c);

}  // namespace triplane
