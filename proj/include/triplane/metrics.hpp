#pragma once

// Occupancy metrics at the fixed 0.5 threshold. Chamfer distances are in
// voxel-length^2 units between occupied voxel centres.

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <json.hpp>

namespace triplane {

/// |P and T| / |P or T|; 1 when both are empty.
double iou(std::span<const float> pred, std::span<const float> target);
/// Harmonic mean of voxel precision and recall; 1 when both are empty.
double f_score(std::span<const float> pred, std::span<const float> target);
/// 0.5 * (mean NN^2 from pred to target + mean NN^2 from target to pred),
/// brute force. Throws NumericError when either set is empty.
double chamfer_l2(std::span<const float> pred, std::span<const float> target,
                  const std::array<std::size_t, 3>& dims);

struct MetricSet {
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double f_score = std::numeric_limits<double>::quiet_NaN();
  double iou = std::numeric_limits<double>::quiet_NaN();
  double chamfer_l2 = std::numeric_limits<double>::quiet_NaN();
};

/// Dense metrics for one prediction; Chamfer stays NaN when a set is empty.
MetricSet metric_suite(std::span<const float> pred, std::span<const float> target,
                       const std::array<std::size_t, 3>& dims);

/// Fraction of predicted labels equal to the reference labels.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

/// Running means over samples; NaN entries are skipped and counted.
struct MetricAccumulator {
  double sum_accuracy = 0, sum_f = 0, sum_iou = 0, sum_chamfer = 0;
  std::size_t n_accuracy = 0, n_f = 0, n_iou = 0, n_chamfer = 0;
  std::size_t undefined_chamfer = 0;

  void add(const MetricSet& m);
  MetricSet mean() const;
};

nlohmann::json to_json(const MetricSet& m);

}  // namespace triplane
