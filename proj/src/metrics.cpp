#include "triplane/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "triplane/error.hpp"
#include "triplane/shapes.hpp"

namespace triplane {

namespace {

struct Counts {
  std::size_t pred = 0, target = 0, both = 0, either = 0;
};

Counts count(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size()) throw ShapeError("metrics: prediction and target sizes differ");
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > kOccupied, t = target[i] > kOccupied;
    c.pred += p;
    c.target += t;
    c.both += p && t;
    c.either += p || t;
  }
  return c;
}

std::vector<std::array<float, 3>> occupied_centres(std::span<const float> v,
                                                   const std::array<std::size_t, 3>& d) {
  std::vector<std::array<float, 3>> pts;
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k)
        if (v[(i * d[1] + j) * d[2] + k] > kOccupied) {
          pts.push_back({float(i), float(j), float(k)});
        }
  return pts;
}

double mean_nn_sq(const std::vector<std::array<float, 3>>& from,
                  const std::vector<std::array<float, 3>>& to) {
  double total = 0;
#pragma omp parallel for reduction(+ : total) schedule(static)
  for (std::size_t a = 0; a < from.size(); ++a) {
    float best = std::numeric_limits<float>::max();
    const auto& p = from[a];
    for (const auto& q : to) {
      const float dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double iou(std::span<const float> pred, std::span<const float> target) {
  const Counts c = count(pred, target);
  return c.either == 0 ? 1.0 : double(c.both) / double(c.either);
}

double f_score(std::span<const float> pred, std::span<const float> target) {
  const Counts c = count(pred, target);
  if (c.pred == 0 && c.target == 0) return 1.0;
  if (c.both == 0) return 0.0;
  const double precision = double(c.both) / double(c.pred);
  const double recall = double(c.both) / double(c.target);
  return 2.0 * precision * recall / (precision + recall);
}

double chamfer_l2(std::span<const float> pred, std::span<const float> target,
                  const std::array<std::size_t, 3>& dims) {
  if (pred.size() != target.size() || pred.size() != dims[0] * dims[1] * dims[2]) {
    throw ShapeError("chamfer_l2: sizes do not match the grid");
  }
  const auto a = occupied_centres(pred, dims);
  const auto b = occupied_centres(target, dims);
  if (a.empty() || b.empty()) throw NumericError("chamfer_l2: undefined for an empty point set");
  return 0.5 * (mean_nn_sq(a, b) + mean_nn_sq(b, a));
}

MetricSet metric_suite(std::span<const float> pred, std::span<const float> target,
                       const std::array<std::size_t, 3>& dims) {
  MetricSet m;
  m.iou = iou(pred, target);
  m.f_score = f_score(pred, target);
  const Counts c = count(pred, target);
  if (c.pred > 0 && c.target > 0) m.chamfer_l2 = chamfer_l2(pred, target, dims);
  return m;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: label counts differ");
  if (labels.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return double(hits) / double(labels.size());
}

void MetricAccumulator::add(const MetricSet& m) {
  auto put = [](double v, double& sum, std::size_t& n) {
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  };
  put(m.accuracy, sum_accuracy, n_accuracy);
  put(m.f_score, sum_f, n_f);
  put(m.iou, sum_iou, n_iou);
  put(m.chamfer_l2, sum_chamfer, n_chamfer);
  if (std::isnan(m.chamfer_l2) && !std::isnan(m.iou)) ++undefined_chamfer;
}

MetricSet MetricAccumulator::mean() const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MetricSet m;
  m.accuracy = n_accuracy ? sum_accuracy / double(n_accuracy) : nan;
  m.f_score = n_f ? sum_f / double(n_f) : nan;
  m.iou = n_iou ? sum_iou / double(n_iou) : nan;
  m.chamfer_l2 = n_chamfer ? sum_chamfer / double(n_chamfer) : nan;
  return m;
}

nlohmann::json to_json(const MetricSet& m) {
  auto val = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"accuracy", val(m.accuracy)},
          {"f_score", val(m.f_score)},
          {"iou", val(m.iou)},
          {"chamfer_l2", val(m.chamfer_l2)}};
}

}  // namespace triplane
