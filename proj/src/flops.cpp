#include "triplane/flops.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "triplane/error.hpp"
#include "triplane/flop_costs.hpp"
#include "triplane/volumetric.hpp"

namespace triplane {

namespace {

using u64 = std::uint64_t;

void require_positive(std::initializer_list<std::size_t> dims, const char* what) {
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError(std::string(what) + ": dimensions must be positive");
  }
}

u64 volume(const Dims& d) { return u64(d[0]) * d[1] * d[2]; }

/// Separable trilinear resize cost: passes over z, then y, then x.
u64 trilinear_cost(std::size_t c, Dims in, const Dims& out) {
  u64 f = 0;
  for (int axis = 2; axis >= 0; --axis) {
    if (in[axis] != out[axis]) {
      in[axis] = out[axis];
      f += flop_cost::kLinearInterp * c * volume(in);
    }
  }
  return f;
}

/// Block means along x, y and z in turn; returns the cost and updates dims.
u64 block_mean_cost(std::size_t c, Dims& dims, std::size_t factor) {
  u64 f = 0;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    f += c * volume(dims);
    dims[axis] = (dims[axis] + factor - 1) / factor;
  }
  return f;
}

u64 conv_stack_2d(const std::vector<std::size_t>& ch, std::size_t h, std::size_t w) {
  u64 f = 0;
  for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
    f += count_conv2d(ch[l], ch[l + 1], 3, h, w);
    if (l + 2 < ch.size()) f += u64(ch[l + 1]) * h * w;  // relu
  }
  return f;
}

u64 conv_stack_3d(const std::vector<std::size_t>& ch, std::size_t k, const Dims& d) {
  u64 f = 0;
  for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
    f += count_conv3d(ch[l], ch[l + 1], k, d[0], d[1], d[2]);
    if (l + 2 < ch.size()) f += u64(ch[l + 1]) * volume(d);  // relu
  }
  return f;
}

std::vector<std::size_t> mixer_channels(std::size_t in, std::size_t layers, std::size_t out) {
  std::vector<std::size_t> ch(1, in);
  for (std::size_t l = 1; l < layers; ++l) ch.push_back(in);
  if (layers > 0) ch.push_back(out);
  return ch;
}

u64 transformer_cost(const ModelConfig& c, const Dims& dims) {
  const std::size_t d = c.pe.model_dim;
  const std::size_t ffn = c.pe.ffn_mult * d;
  const std::size_t len = dims[0] + dims[1] + dims[2];
  u64 f = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    f += count_linear(dims[k], c.in_channels, d);
    f += u64(dims[k]) * d;                                // axis embedding
    if (c.pe.position_embedding) f += u64(dims[k]) * d;  // positions
  }
  for (std::size_t l = 0; l < c.pe.layers; ++l) {
    f += flop_cost::kLayerNorm * u64(len) * d;
    f += count_attention(len, d, c.pe.heads);
    f += u64(len) * d;  // residual
    f += flop_cost::kLayerNorm * u64(len) * d;
    f += count_linear(len, d, ffn) + u64(len) * ffn + count_linear(len, ffn, d);
    f += u64(len) * d;  // residual
  }
  f += flop_cost::kLayerNorm * u64(len) * d;
  return f;
}

}  // namespace

u64 count_conv2d(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t h, std::size_t w,
                 bool bias) {
  require_positive({c_in, c_out, k, h, w}, "count_conv2d");
  const u64 s = u64(h) * w;
  return flop_cost::kMultiplyAdd * u64(c_in) * c_out * k * k * s + (bias ? c_out * s : 0);
}

u64 count_conv3d(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t d, std::size_t h,
                 std::size_t w, bool bias) {
  require_positive({c_in, c_out, k, d, h, w}, "count_conv3d");
  const u64 s = u64(d) * h * w;
  return flop_cost::kMultiplyAdd * u64(c_in) * c_out * k * k * k * s + (bias ? c_out * s : 0);
}

u64 count_matmul(std::size_t m, std::size_t k, std::size_t n) {
  require_positive({m, k, n}, "count_matmul");
  return flop_cost::kMultiplyAdd * u64(m) * k * n;
}

u64 count_linear(std::size_t rows, std::size_t in, std::size_t out, bool bias) {
  return count_matmul(rows, in, out) + (bias ? u64(rows) * out : 0);
}

u64 count_attention(std::size_t seq, std::size_t dim, std::size_t heads) {
  require_positive({seq, dim, heads}, "count_attention");
  if (dim % heads != 0) throw ConfigError("count_attention: dim must be divisible by heads");
  const std::size_t dh = dim / heads;
  const u64 scores = u64(seq) * seq;
  u64 f = 4 * count_linear(seq, dim, dim);
  f += heads * (count_matmul(seq, dh, seq) + flop_cost::kElementwise * scores +
                flop_cost::kSoftmax * scores + count_matmul(seq, seq, dh));
  return f;
}

std::uint64_t FlopsReport::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return s.flops;
  }
  throw Error("flops report has no stage '" + name + "'");
}

std::uint64_t FlopsReport::pe_flops() const {
  u64 f = 0;
  for (const auto& s : stages) {
    if (s.name.rfind("pe_", 0) == 0) f += s.flops;
  }
  return f;
}

nlohmann::json FlopsReport::to_json() const {
  nlohmann::json stages_json = nlohmann::json::array();
  for (const auto& s : stages) stages_json.push_back({{"stage", s.name}, {"flops", s.flops}});
  return {{"label", label},           {"variant", to_string(variant)},
          {"dims", dims},             {"stages", stages_json},
          {"total_flops", total},     {"gflops", double(total) / 1e9},
          {"pe_flops", pe_flops()},   {"pe_share", pe_share()}};
}

std::string FlopsReport::to_table() const {
  std::ostringstream out;
  char line[160];
  out << (label.empty() ? to_string(variant) : label) << " @ " << dims[0] << "x" << dims[1] << "x"
      << dims[2] << "\n";
  for (const auto& s : stages) {
    std::snprintf(line, sizeof line, "  %-18s %16llu  %6.2f%%\n", s.name.c_str(),
                  static_cast<unsigned long long>(s.flops),
                  total ? 100.0 * double(s.flops) / double(total) : 0.0);
    out << line;
  }
  std::snprintf(line, sizeof line, "  %-18s %16llu  (%.4f GFLOPs, PE share %.4f%%)\n", "total",
                static_cast<unsigned long long>(total), double(total) / 1e9, 100.0 * pe_share());
  out << line;
  return out.str();
}

FlopsReport count_model(const ModelConfig& config, const Dims& dims, std::string label) {
  ModelConfig c = config;
  c.dims = dims;
  c.validate();
  const u64 n = volume(dims);
  const std::size_t cin = c.in_channels;
  const std::size_t cf = c.feature_channels;
  const std::size_t head = c.head_channels();

  FlopsReport r;
  r.label = std::move(label);
  r.variant = c.variant;
  r.dims = dims;
  auto add = [&](const char* name, u64 f) { r.stages.push_back({name, f}); };

  if (c.variant == Variant::dense3d) {
    for (const char* s : {"projection", "plane_encoders", "lifting", "pe_tokens", "pe_encoder",
                          "pe_heads", "pe_weight_volume", "pe_modulation", "volume_branch",
                          "fusion"}) {
      add(s, 0);
    }
    const std::size_t w = c.dense_width;
    u64 f = count_conv3d(cin, w, 3, dims[0], dims[1], dims[2]) + w * n;
    f += count_conv3d(w, w, 3, dims[0], dims[1], dims[2]) + w * n;
    Dims coarse = dims;
    f += block_mean_cost(w, coarse, 2);
    f += count_conv3d(w, w, 3, coarse[0], coarse[1], coarse[2]) + w * volume(coarse);
    f += trilinear_cost(w, coarse, dims);
    f += w * n;  // skip addition
    f += count_conv3d(w, w, 3, dims[0], dims[1], dims[2]) + w * n;
    const auto mix = mixer_channels(w, c.mixer_layers, head);
    add("mixer", conv_stack_3d(mix, 1, dims));
    add("task_head", c.task == TaskKind::classify ? head * n : 0);
    add("dense3d", f);
  } else {
    const bool pe = c.uses_pe();
    const bool weights = pe && c.pe.mode != PEMode::coordconv;
    const std::size_t cp = c.plane_in_channels();

    add("projection", 3 * cp * n);
    std::vector<std::size_t> ch{cp};
    ch.insert(ch.end(), c.plane_hidden.begin(), c.plane_hidden.end());
    ch.push_back(cf);
    add("plane_encoders", conv_stack_2d(ch, dims[1], dims[2]) +
                              conv_stack_2d(ch, dims[0], dims[2]) +
                              conv_stack_2d(ch, dims[0], dims[1]));
    const u64 planes = u64(dims[1]) * dims[2] + u64(dims[0]) * dims[2] + u64(dims[0]) * dims[1];
    add("lifting", cf * planes + 2 * cf * n);

    u64 tokens = 0, encoder = 0, heads = 0, wv = 0, mod = 0;
    if (weights) {
      wv = 2 * cin * n + 2 * cf * n;
      mod = cin * n + cf * n;
    }
    switch (pe ? c.pe.mode : PEMode::none) {
      case PEMode::transformer:
        tokens = 2 * cin * n + 2 * u64(cin) * dims[0] * dims[1] + u64(cin) * dims[0] * dims[2];
        encoder = transformer_cost(c, dims);
        for (std::size_t k = 0; k < 3; ++k) {
          heads += count_linear(dims[k], c.pe.model_dim, cin) +
                   count_linear(dims[k], c.pe.model_dim, cf);
        }
        break;
      case PEMode::sinusoidal:
        for (std::size_t k = 0; k < 3; ++k) {
          heads += count_linear(dims[k], 2 * c.pe.frequencies, cin) +
                   count_linear(dims[k], 2 * c.pe.frequencies, cf);
        }
        break;
      case PEMode::mlp:
        for (std::size_t k = 0; k < 3; ++k) {
          encoder += count_linear(dims[k], 1, c.pe.mlp_hidden) + u64(dims[k]) * c.pe.mlp_hidden;
          heads += count_linear(dims[k], c.pe.mlp_hidden, cin) +
                   count_linear(dims[k], c.pe.mlp_hidden, cf);
        }
        break;
      case PEMode::none:
      case PEMode::coordconv:
        break;
    }
    add("pe_tokens", tokens);
    add("pe_encoder", encoder);
    add("pe_heads", heads);
    add("pe_weight_volume", wv);
    add("pe_modulation", mod);

    u64 branch = 0, fusion = 0;
    if (c.uses_branch()) {
      const bool coord_input = c.branch.use_modulated_input && c.pe.mode == PEMode::coordconv;
      const std::size_t cb = cin + (coord_input ? 3 : 0);
      Dims coarse{};
      for (std::size_t k = 0; k < 3; ++k) coarse[k] = downsampled_length(dims[k], c.branch.ratio);
      if (coarse != dims) {
        const std::size_t f = integral_block_factor(c.branch.ratio);
        if (f > 1) {
          Dims tmp = dims;
          branch += block_mean_cost(cb, tmp, f);
        } else {
          branch += trilinear_cost(cb, dims, coarse);
        }
      }
      std::vector<std::size_t> hch{cb};
      hch.insert(hch.end(), c.branch.hidden.begin(), c.branch.hidden.end());
      hch.push_back(cf);
      branch += conv_stack_3d(hch, 3, coarse);
      branch += trilinear_cost(cf, coarse, dims);
      fusion = cf * n;
    }
    add("volume_branch", branch);
    add("fusion", fusion);
    add("mixer", conv_stack_3d(mixer_channels(cf, c.mixer_layers, head), 1, dims));
    add("task_head", c.task == TaskKind::classify ? head * n : 0);
    add("dense3d", 0);
  }
  for (const auto& s : r.stages) r.total += s.flops;
  return r;
}

nlohmann::json Comparison::to_json() const {
  nlohmann::json j;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  j["ratio"] = ratio;
  return j;
}

std::string Comparison::to_table() const {
  std::ostringstream out;
  char line[160];
  for (const auto& r : reports) {
    const double base = reports.empty() ? 1.0 : double(reports.front().total);
    std::snprintf(line, sizeof line, "%-24s %10.4f GFLOPs  x%.3f vs cheapest\n", r.label.c_str(),
                  double(r.total) / 1e9, double(r.total) / base);
    out << line;
  }
  return out.str();
}

Comparison compare(const std::vector<std::pair<std::string, ModelConfig>>& configs,
                   const Dims& dims) {
  Comparison cmp;
  for (const auto& [label, cfg] : configs) cmp.reports.push_back(count_model(cfg, dims, label));
  std::stable_sort(cmp.reports.begin(), cmp.reports.end(),
                   [](const FlopsReport& a, const FlopsReport& b) { return a.total < b.total; });
  for (const auto& a : cmp.reports) {
    std::vector<double> row;
    for (const auto& b : cmp.reports) row.push_back(double(a.total) / double(b.total));
    cmp.ratio.push_back(row);
  }
  return cmp;
}

}  // namespace triplane
