#pragma once

// Procedural shape datasets: analytic signed distances rasterised to
// occupancy grids, with an occlusion operator for the completion task.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "triplane/config.hpp"

namespace triplane {

enum class ShapeClass : int { sphere = 0, box = 1, torus = 2, cone = 3 };
inline constexpr std::size_t kNumShapeClasses = 4;
std::string to_string(ShapeClass c);

/// Occupancy threshold used by every metric and by occlusion.
inline constexpr float kOccupied = 0.5f;

/// Single-channel grid stored x-major: index (i * Dy + j) * Dz + k.
struct Grid {
  std::array<std::size_t, 3> dims{};
  std::vector<float> values;

  std::size_t numel() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t occupied() const;
  bool operator==(const Grid&) const = default;
};

struct ShapeParams {
  ShapeClass cls = ShapeClass::sphere;
  std::array<double, 3> center{};    // voxel units
  std::array<double, 9> rotation{};  // row-major, world = R * local
  double size = 1.0;                 // primary radius in voxels
  std::array<double, 3> extent{};    // box half extents / torus radii / cone radius, height
};

/// Signed distance of a world-space point to the shape (negative inside).
double shape_sdf(const ShapeParams& s, const std::array<double, 3>& p);

/// Occupancy clamp(0.5 - sdf, 0, 1) sampled at voxel centres (i + 0.5, ...).
Grid rasterize(const ShapeParams& s, const std::array<std::size_t, 3>& dims);

/// Random pose, scale and thickness for the class, drawn from `seed`.
ShapeParams random_shape(ShapeClass cls, std::uint64_t seed, const std::array<std::size_t, 3>& dims);

/// Zeroes the leading part of the grid in a seeded axis order (axes permuted,
/// each direction possibly flipped) until round(fraction * occupied) occupied
/// voxels are removed. The removed region is a stack of axis-aligned slabs.
Grid occlude(const Grid& g, double fraction, std::uint64_t seed);

struct ShapeSample {
  Grid input;
  Grid target;  // completion: the unoccluded shape; classification: equals input
  int label = 0;
};

struct DatasetSpec {
  TaskKind task = TaskKind::complete;
  std::size_t count = 0;
  std::array<std::size_t, 3> dims{32, 32, 32};
  std::uint64_t seed = 0;
  double occlusion = 0.4;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<ShapeSample> samples;
};

/// Classes cycle sphere, box, torus, cone so histograms are balanced.
Dataset gen_shapes(const DatasetSpec& spec);

/// `dir`/dataset.json plus inputs.vxg and targets.vxg (one channel per sample).
void save_dataset(const Dataset& d, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace triplane
