#include "triplane/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "triplane/error.hpp"

namespace triplane {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

bool lower_is_better(const std::string& metric) { return metric == "loss" || metric == "chamfer_l2"; }

/// Roughly five round-valued ticks covering [lo, hi].
std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

}  // namespace

std::string default_metric(const std::vector<MetricRow>& rows) {
  for (const auto& r : rows)
    if (r.metric == "iou") return "iou";
  for (const auto& r : rows)
    if (r.metric == "accuracy") return "accuracy";
  throw ConfigError("metrics log has neither iou nor accuracy rows");
}

PlotSeries series_from_metrics(const std::vector<MetricRow>& rows, const std::string& label,
                               PlotAxis axis, std::string metric, const std::string& split) {
  if (metric.empty()) metric = default_metric(rows);
  PlotSeries s{label, {}};
  if (axis == PlotAxis::epoch) {
    std::map<long, double> by_epoch;
    for (const auto& r : rows)
      if (r.split == split && r.metric == metric && r.epoch >= 0) by_epoch[r.epoch] = r.value;
    if (by_epoch.empty()) {
      throw ConfigError("metrics log '" + label + "' has no " + split + " rows for '" + metric + "'");
    }
    for (auto [e, v] : by_epoch) s.points.emplace_back(double(e), v);
    return s;
  }
  double gflops = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows)
    if (r.split == "model" && r.metric == "gflops") gflops = r.value;
  if (std::isnan(gflops)) throw ConfigError("metrics log '" + label + "' has no model gflops row");
  double y = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows)
    if (r.split == "test" && r.metric == metric) y = r.value;
  if (std::isnan(y)) {
    for (const auto& r : rows) {
      if (r.split != split || r.metric != metric) continue;
      if (std::isnan(y) || (lower_is_better(metric) ? r.value < y : r.value > y)) y = r.value;
    }
  }
  if (std::isnan(y)) throw ConfigError("metrics log '" + label + "' has no '" + metric + "' rows");
  s.points.emplace_back(gflops, y);
  return s;
}

std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::size_t n = 0;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) throw ConfigError("plot: non-finite point in '" + s.label + "'");
      if (spec.log_x && x <= 0) throw ConfigError("plot: log x axis needs positive values");
      const double xv = spec.log_x ? std::log10(x) : x;
      x0 = std::min(x0, xv);
      x1 = std::max(x1, xv);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      ++n;
    }
  if (n == 0) throw ConfigError("plot: nothing to draw");
  if (spec.log_x) {
    x0 = std::floor(x0);
    x1 = std::max(std::ceil(x1), x0 + 1);
  } else if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.05;
    y1 += 0.05;
  } else {
    const double pad = 0.08 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }

  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;
  auto px = [&](double x) {
    const double xv = spec.log_x ? std::log10(x) : x;
    return left + (xv - x0) / (x1 - x0) * pw;
  };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
     << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\"" << spec.height << "\" fill=\"white\"/>\n";
  if (!spec.title.empty()) {
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << escape(spec.title) << "</text>\n";
  }
  os << "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n"
     << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
     << "\"/>\n</g>\n";

  os << "<g class=\"ticks\" fill=\"#333\">\n";
  std::vector<double> xt;
  if (spec.log_x) {
    for (double e = x0; e <= x1 + 1e-9; e += 1) xt.push_back(std::pow(10.0, e));
  } else {
    xt = linear_ticks(x0, x1);
  }
  for (double t : xt) {
    const double x = px(t);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x) << "\" y2=\""
       << num(top + ph + 5) << "\" stroke=\"#333\"/>"
       << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
       << tick_label(t) << "</text>\n";
  }
  for (double t : linear_ticks(y0, y1)) {
    const double y = py(t);
    os << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left) << "\" y2=\"" << num(y)
       << "\" stroke=\"#333\"/>"
       << "<text x=\"" << num(left - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << tick_label(t)
       << "</text>\n";
  }
  os << "</g>\n";
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(spec.height - 12.0)
     << "\" text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n"
     << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(spec.y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<g class=\"series\" data-label=\"" << escape(s.label) << "\" stroke=\"" << color << "\" fill=\"" << color
       << "\">\n";
    if (s.points.size() > 1) {
      os << "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"";
      for (std::size_t p = 0; p < s.points.size(); ++p) {
        os << (p ? " " : "") << num(px(s.points[p].first)) << ',' << num(py(s.points[p].second));
      }
      os << "\"/>\n";
    }
    for (auto [x, y] : s.points) {
      os << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"4\"/>\n";
    }
    const double ly = top + 14 + 18.0 * double(i);
    os << "<rect x=\"" << num(left + pw + 15) << "\" y=\"" << num(ly - 9) << "\" width=\"10\" height=\"10\"/>"
       << "<text x=\"" << num(left + pw + 30) << "\" y=\"" << num(ly) << "\" stroke=\"none\" fill=\"#333\">"
       << escape(s.label) << "</text>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace triplane
