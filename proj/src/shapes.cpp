#include "triplane/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "triplane/error.hpp"
#include "triplane/vxg.hpp"

namespace triplane {

namespace {

using Vec3 = std::array<double, 3>;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finaliser over the combined value.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double length2(double a, double b) { return std::sqrt(a * a + b * b); }

double sd_box(const Vec3& p, const Vec3& b) {
  Vec3 q;
  for (int i = 0; i < 3; ++i) q[i] = std::abs(p[i]) - b[i];
  const double outside = std::sqrt(std::pow(std::max(q[0], 0.0), 2) +
                                   std::pow(std::max(q[1], 0.0), 2) +
                                   std::pow(std::max(q[2], 0.0), 2));
  return outside + std::min(std::max(q[0], std::max(q[1], q[2])), 0.0);
}

double sd_torus(const Vec3& p, double major, double minor) {
  return length2(length2(p[0], p[2]) - major, p[1]) - minor;
}

/// Capped cone along y with half height h, radius r1 at y = -h, r2 at y = +h.
double sd_capped_cone(const Vec3& p, double h, double r1, double r2) {
  const double qx = length2(p[0], p[2]);
  const double qy = p[1];
  const double k1x = r2, k1y = h;
  const double k2x = r2 - r1, k2y = 2.0 * h;
  const double cax = qx - std::min(qx, qy < 0.0 ? r1 : r2);
  const double cay = std::abs(qy) - h;
  const double t = std::clamp(((k1x - qx) * k2x + (k1y - qy) * k2y) / (k2x * k2x + k2y * k2y), 0.0, 1.0);
  const double cbx = qx - k1x + k2x * t;
  const double cby = qy - k1y + k2y * t;
  const double s = (cbx < 0.0 && cay < 0.0) ? -1.0 : 1.0;
  return s * std::sqrt(std::min(cax * cax + cay * cay, cbx * cbx + cby * cby));
}

std::array<double, 9> random_rotation(std::mt19937_64& rng) {
  // Uniform unit quaternion (Shoemake).
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(2 * std::numbers::pi * u2);
  const double x = a * std::cos(2 * std::numbers::pi * u2);
  const double y = b * std::sin(2 * std::numbers::pi * u3);
  const double z = b * std::cos(2 * std::numbers::pi * u3);
  return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
          2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
          2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

VxgVolume pack(const Dataset& d, bool targets) {
  VxgVolume v;
  v.channels = static_cast<std::uint32_t>(d.samples.size());
  for (int k = 0; k < 3; ++k) v.dims[k] = static_cast<std::uint32_t>(d.spec.dims[k]);
  v.values.reserve(v.numel());
  for (const auto& s : d.samples) {
    const Grid& g = targets ? s.target : s.input;
    v.values.insert(v.values.end(), g.values.begin(), g.values.end());
  }
  return v;
}

}  // namespace

std::string to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::sphere: return "sphere";
    case ShapeClass::box: return "box";
    case ShapeClass::torus: return "torus";
    case ShapeClass::cone: return "cone";
  }
  return "?";
}

std::size_t Grid::occupied() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](float v) { return v > kOccupied; }));
}

double shape_sdf(const ShapeParams& s, const Vec3& p) {
  Vec3 d{p[0] - s.center[0], p[1] - s.center[1], p[2] - s.center[2]};
  Vec3 local{};
  const auto& r = s.rotation;
  for (int i = 0; i < 3; ++i) local[i] = r[i] * d[0] + r[3 + i] * d[1] + r[6 + i] * d[2];  // R^T d
  switch (s.cls) {
    case ShapeClass::sphere:
      return std::sqrt(local[0] * local[0] + local[1] * local[1] + local[2] * local[2]) - s.size;
    case ShapeClass::box: return sd_box(local, s.extent);
    case ShapeClass::torus: return sd_torus(local, s.extent[0], s.extent[1]);
    case ShapeClass::cone: return sd_capped_cone(local, s.extent[1], s.extent[0], 0.0);
  }
  return 0.0;
}

Grid rasterize(const ShapeParams& s, const std::array<std::size_t, 3>& dims) {
  Grid g;
  g.dims = dims;
  g.values.resize(g.numel());
  for (std::size_t i = 0; i < dims[0]; ++i) {
    for (std::size_t j = 0; j < dims[1]; ++j) {
      for (std::size_t k = 0; k < dims[2]; ++k) {
        const double sdf = shape_sdf(s, {i + 0.5, j + 0.5, k + 0.5});
        g.values[(i * dims[1] + j) * dims[2] + k] =
            static_cast<float>(std::clamp(0.5 - sdf, 0.0, 1.0));
      }
    }
  }
  return g;
}

ShapeParams random_shape(ShapeClass cls, std::uint64_t seed,
                         const std::array<std::size_t, 3>& dims) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double base = static_cast<double>(*std::min_element(dims.begin(), dims.end()));
  ShapeParams s;
  s.cls = cls;
  for (int k = 0; k < 3; ++k) s.center[k] = dims[k] / 2.0 + uniform(-0.08, 0.08) * base;
  s.rotation = random_rotation(rng);
  s.size = uniform(0.25, 0.36) * base;
  switch (cls) {
    case ShapeClass::sphere: break;
    case ShapeClass::box:
      for (auto& e : s.extent) e = s.size * uniform(0.5, 0.95);
      break;
    case ShapeClass::torus:
      s.extent = {s.size * uniform(0.6, 0.8), s.size * uniform(0.28, 0.42), 0.0};
      break;
    case ShapeClass::cone:
      s.extent = {s.size * uniform(0.7, 1.0), s.size * uniform(0.8, 1.1), 0.0};
      break;
  }
  return s;
}

Grid occlude(const Grid& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("occlude: fraction must lie in (0, 1)");
  }
  Grid out = g;
  const auto target = static_cast<std::size_t>(std::llround(fraction * double(g.occupied())));
  if (target == 0) return out;
  std::mt19937_64 rng(seed);
  std::array<std::size_t, 3> order{0, 1, 2};
  std::shuffle(order.begin(), order.end(), rng);
  std::array<bool, 3> flip{};
  for (auto& f : flip) f = (rng() & 1u) != 0;
  const auto& d = g.dims;
  std::size_t removed = 0;
  std::array<std::size_t, 3> idx{};
  for (std::size_t a = 0; a < d[order[0]]; ++a) {
    for (std::size_t b = 0; b < d[order[1]]; ++b) {
      for (std::size_t c = 0; c < d[order[2]]; ++c) {
        const std::size_t loop[3] = {a, b, c};
        for (int q = 0; q < 3; ++q) {
          const std::size_t ax = order[q];
          idx[ax] = flip[ax] ? d[ax] - 1 - loop[q] : loop[q];
        }
        float& v = out.values[(idx[0] * d[1] + idx[1]) * d[2] + idx[2]];
        if (v > kOccupied) ++removed;
        v = 0.0f;
        if (removed == target) return out;
      }
    }
  }
  return out;
}

Dataset gen_shapes(const DatasetSpec& spec) {
  for (std::size_t d : spec.dims) {
    if (d < 16) throw ConfigError("gen_shapes: dims must be at least 16 per axis");
  }
  if (spec.count == 0) throw ConfigError("gen_shapes: count must be >= 1");
  Dataset ds;
  ds.spec = spec;
  ds.samples.resize(spec.count);
  const std::size_t min_occupied = (spec.dims[0] * spec.dims[1] * spec.dims[2] + 99) / 100;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto cls = static_cast<ShapeClass>(i % kNumShapeClasses);
    const std::uint64_t s = mix_seed(spec.seed, i);
    Grid full;
    for (std::uint64_t attempt = 0;; ++attempt) {
      full = rasterize(random_shape(cls, mix_seed(s, attempt), spec.dims), spec.dims);
      if (full.occupied() >= min_occupied) break;
    }
    ShapeSample& out = ds.samples[i];
    out.label = static_cast<int>(cls);
    if (spec.task == TaskKind::complete) {
      out.input = occlude(full, spec.occlusion, mix_seed(s, 0xC0FFEEull));
      out.target = std::move(full);
    } else {
      out.input = full;
      out.target = std::move(full);
    }
  }
  return ds;
}

void save_dataset(const Dataset& d, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& s : d.samples) labels.push_back(s.label);
  nlohmann::json meta = {{"format", "triplane-dataset"},
                         {"task", to_string(d.spec.task)},
                         {"count", d.samples.size()},
                         {"dims", d.spec.dims},
                         {"seed", d.spec.seed},
                         {"occlusion", d.spec.occlusion},
                         {"labels", labels}};
  write_vxg(dir + "/inputs.vxg", pack(d, false));
  if (d.spec.task == TaskKind::complete) write_vxg(dir + "/targets.vxg", pack(d, true));
  std::ofstream out(dir + "/dataset.json");
  if (!out) throw IoError("cannot write '" + dir + "/dataset.json'");
  out << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/dataset.json");
  if (!in) throw IoError("cannot open '" + dir + "/dataset.json'");
  nlohmann::json meta;
  Dataset d;
  std::vector<int> labels;
  try {
    in >> meta;
    d.spec.task = parse_task(meta.at("task").get<std::string>());
    d.spec.count = meta.at("count").get<std::size_t>();
    d.spec.dims = meta.at("dims").get<std::array<std::size_t, 3>>();
    d.spec.seed = meta.at("seed").get<std::uint64_t>();
    d.spec.occlusion = meta.at("occlusion").get<double>();
    labels = meta.at("labels").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed '" + dir + "/dataset.json': " + e.what());
  }
  const VxgVolume inputs = read_vxg(dir + "/inputs.vxg");
  const bool complete = d.spec.task == TaskKind::complete;
  const VxgVolume targets = complete ? read_vxg(dir + "/targets.vxg") : inputs;
  const std::array<std::uint32_t, 3> dims{static_cast<std::uint32_t>(d.spec.dims[0]),
                                          static_cast<std::uint32_t>(d.spec.dims[1]),
                                          static_cast<std::uint32_t>(d.spec.dims[2])};
  if (inputs.channels != d.spec.count || labels.size() != d.spec.count || inputs.dims != dims ||
      targets.channels != inputs.channels || targets.dims != dims) {
    throw IoError("dataset '" + dir + "': files disagree with dataset.json");
  }
  const std::size_t per = inputs.numel() / std::max<std::size_t>(inputs.channels, 1);
  d.samples.resize(d.spec.count);
  for (std::size_t i = 0; i < d.spec.count; ++i) {
    auto& s = d.samples[i];
    s.label = labels[i];
    s.input.dims = s.target.dims = d.spec.dims;
    s.input.values.assign(inputs.values.begin() + i * per, inputs.values.begin() + (i + 1) * per);
    s.target.values.assign(targets.values.begin() + i * per,
                           targets.values.begin() + (i + 1) * per);
  }
  return d;
}

}  // namespace triplane
