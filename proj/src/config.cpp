#include "triplane/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "triplane/error.hpp"

namespace triplane {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::backbone: return "backbone";
    case Variant::hybrid: return "hybrid";
    case Variant::dense3d: return "dense3d";
  }
  return "?";
}

std::string to_string(TaskKind t) { return t == TaskKind::classify ? "classify" : "complete"; }

std::string to_string(PEMode m) {
  switch (m) {
    case PEMode::none: return "none";
    case PEMode::sinusoidal: return "sinusoidal";
    case PEMode::coordconv: return "coordconv";
    case PEMode::mlp: return "mlp";
    case PEMode::transformer: return "transformer";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "backbone") return Variant::backbone;
  if (s == "hybrid") return Variant::hybrid;
  if (s == "dense3d") return Variant::dense3d;
  throw ConfigError("unknown variant '" + s + "'");
}

TaskKind parse_task(const std::string& s) {
  if (s == "classify") return TaskKind::classify;
  if (s == "complete") return TaskKind::complete;
  throw ConfigError("unknown task '" + s + "'");
}

PEMode parse_pe_mode(const std::string& s) {
  for (PEMode m : {PEMode::none, PEMode::sinusoidal, PEMode::coordconv, PEMode::mlp,
                   PEMode::transformer}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown pe.mode '" + s + "'");
}

std::size_t ModelConfig::head_channels() const {
  return task == TaskKind::complete ? 1 : num_classes;
}

std::size_t ModelConfig::plane_in_channels() const {
  return in_channels + (uses_pe() && pe.mode == PEMode::coordconv ? 3 : 0);
}

ModelConfig ModelConfig::defaults(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  if (variant == Variant::hybrid) {
    c.pe.mode = PEMode::transformer;
    c.branch.enabled = true;
  }
  return c;
}

void ModelConfig::validate() const {
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("dims must be >= 1");
  }
  if (in_channels == 0) throw ConfigError("in_channels must be >= 1");
  if (feature_channels == 0) throw ConfigError("feature_channels must be >= 1");
  for (std::size_t h : plane_hidden) {
    if (h == 0) throw ConfigError("plane_hidden widths must be >= 1");
  }
  if (task == TaskKind::classify && num_classes < 2) {
    throw ConfigError("num_classes must be >= 2 for classification");
  }
  if (dense_width == 0) throw ConfigError("dense_width must be >= 1");
  if (variant == Variant::backbone && (pe.mode != PEMode::none || branch.enabled)) {
    throw ConfigError("variant backbone excludes positional modulation and the volume branch");
  }
  if (variant == Variant::dense3d && (pe.mode != PEMode::none || branch.enabled)) {
    throw ConfigError("variant dense3d excludes positional modulation and the volume branch");
  }
  if (pe.mode == PEMode::transformer) {
    if (pe.model_dim == 0 || pe.heads == 0 || pe.layers == 0 || pe.ffn_mult == 0) {
      throw ConfigError("pe: model_dim, heads, layers and ffn_mult must be >= 1");
    }
    if (pe.model_dim % pe.heads != 0) throw ConfigError("pe.model_dim must be divisible by pe.heads");
    for (std::size_t d : dims) {
      if (pe.position_embedding && d > pe.max_positions) {
        throw ConfigError("pe.max_positions smaller than an axis length");
      }
    }
  }
  if (pe.mode == PEMode::sinusoidal && pe.frequencies == 0) {
    throw ConfigError("pe.frequencies must be >= 1");
  }
  if (pe.mode == PEMode::mlp && pe.mlp_hidden == 0) throw ConfigError("pe.mlp_hidden must be >= 1");
  if (branch.enabled) {
    if (!(branch.ratio > 0.0 && branch.ratio <= 1.0)) {
      throw ConfigError("branch.ratio must lie in (0, 1]");
    }
    for (std::size_t d : dims) {
      if (std::ceil(branch.ratio * static_cast<double>(d)) < 1.0) {
        throw ConfigError("branch.ratio collapses an axis");
      }
    }
    for (std::size_t h : branch.hidden) {
      if (h == 0) throw ConfigError("branch.hidden widths must be >= 1");
    }
  }
}

json to_json(const ModelConfig& c) {
  json pe = {{"mode", to_string(c.pe.mode)},
             {"model_dim", c.pe.model_dim},
             {"layers", c.pe.layers},
             {"heads", c.pe.heads},
             {"ffn_mult", c.pe.ffn_mult},
             {"max_positions", c.pe.max_positions},
             {"position_embedding", c.pe.position_embedding},
             {"frequencies", c.pe.frequencies},
             {"mlp_hidden", c.pe.mlp_hidden}};
  json branch = {{"enabled", c.branch.enabled},
                 {"ratio", c.branch.ratio},
                 {"hidden", c.branch.hidden},
                 {"use_modulated_input", c.branch.use_modulated_input}};
  return json{{"variant", to_string(c.variant)},
              {"task", to_string(c.task)},
              {"dims", c.dims},
              {"in_channels", c.in_channels},
              {"feature_channels", c.feature_channels},
              {"plane_hidden", c.plane_hidden},
              {"shared_plane_encoders", c.shared_plane_encoders},
              {"per_channel_lambda", c.per_channel_lambda},
              {"mixer_layers", c.mixer_layers},
              {"num_classes", c.num_classes},
              {"dense_width", c.dense_width},
              {"pe", pe},
              {"branch", branch},
              {"seed", c.seed}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + where + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + where + key + "': " + e.what());
  }
}

void read_size(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("'" + where + key + "' must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  reject_unknown(j,
                 {"variant", "task", "dims", "in_channels", "feature_channels", "plane_hidden",
                  "shared_plane_encoders", "per_channel_lambda", "mixer_layers", "num_classes",
                  "dense_width", "pe", "branch", "seed"},
                 "");
  if (!j.contains("variant")) throw ConfigError("missing key 'variant'");
  std::string variant;
  read(j, "variant", variant, "");
  ModelConfig c = ModelConfig::defaults(parse_variant(variant));
  if (j.contains("task")) {
    std::string task;
    read(j, "task", task, "");
    c.task = parse_task(task);
  }
  if (j.contains("dims")) {
    const json& d = j.at("dims");
    if (d.is_number_integer()) {
      std::size_t n = 0;
      read_size(j, "dims", n, "");
      c.dims = {n, n, n};
    } else {
      std::vector<std::size_t> v;
      read(j, "dims", v, "");
      if (v.size() != 3) throw ConfigError("'dims' must be an integer or a list of three");
      c.dims = {v[0], v[1], v[2]};
    }
  }
  read_size(j, "in_channels", c.in_channels, "");
  read_size(j, "feature_channels", c.feature_channels, "");
  read(j, "plane_hidden", c.plane_hidden, "");
  read(j, "shared_plane_encoders", c.shared_plane_encoders, "");
  read(j, "per_channel_lambda", c.per_channel_lambda, "");
  read_size(j, "mixer_layers", c.mixer_layers, "");
  read_size(j, "num_classes", c.num_classes, "");
  read_size(j, "dense_width", c.dense_width, "");
  read(j, "seed", c.seed, "");
  if (j.contains("pe")) {
    const json& p = j.at("pe");
    reject_unknown(p,
                   {"mode", "model_dim", "layers", "heads", "ffn_mult", "max_positions",
                    "position_embedding", "frequencies", "mlp_hidden"},
                   "pe.");
    if (p.contains("mode")) {
      std::string mode;
      read(p, "mode", mode, "pe.");
      c.pe.mode = parse_pe_mode(mode);
    }
    read_size(p, "model_dim", c.pe.model_dim, "pe.");
    read_size(p, "layers", c.pe.layers, "pe.");
    read_size(p, "heads", c.pe.heads, "pe.");
    read_size(p, "ffn_mult", c.pe.ffn_mult, "pe.");
    read_size(p, "max_positions", c.pe.max_positions, "pe.");
    read(p, "position_embedding", c.pe.position_embedding, "pe.");
    read_size(p, "frequencies", c.pe.frequencies, "pe.");
    read_size(p, "mlp_hidden", c.pe.mlp_hidden, "pe.");
  }
  if (j.contains("branch")) {
    const json& b = j.at("branch");
    reject_unknown(b, {"enabled", "ratio", "hidden", "use_modulated_input"}, "branch.");
    read(b, "enabled", c.branch.enabled, "branch.");
    read(b, "ratio", c.branch.ratio, "branch.");
    read(b, "hidden", c.branch.hidden, "branch.");
    read(b, "use_modulated_input", c.branch.use_modulated_input, "branch.");
  }
  c.validate();
  return c;
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return model_config_from_json(j);
}

void save_model_config(const ModelConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config '" + path + "'");
  out << to_json(c).dump(2) << "\n";
}

std::uint64_t config_hash(const ModelConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace triplane
