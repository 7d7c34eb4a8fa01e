#pragma once

// Self-contained SVG line/scatter plots of metric logs.

#include <string>
#include <utility>
#include <vector>

#include "triplane/train.hpp"

namespace triplane {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 420;
};

enum class PlotAxis { gflops, epoch };

/// One series from a metrics log. With PlotAxis::gflops the series is a single
/// point (model gflops, final score); with PlotAxis::epoch it is the per-epoch
/// curve of `metric` on `split`. Final score: the test row when present,
/// otherwise the best validation value (lowest for loss and chamfer_l2).
/// An empty `metric` picks iou when logged, otherwise accuracy.
PlotSeries series_from_metrics(const std::vector<MetricRow>& rows, const std::string& label,
                               PlotAxis axis, std::string metric = "", const std::string& split = "val");

/// Resolves the metric name series_from_metrics would use.
std::string default_metric(const std::vector<MetricRow>& rows);

/// Throws ConfigError when there is nothing to draw or log_x meets x <= 0.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec);

}  // namespace triplane
