#include "triplane/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace triplane {

namespace {

double evaluate(const ScalarFunction& f, const Tensor<double>& x) {
  Tensor<double> y = f(x);
  if (y.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
  return y.item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const Tensor<double>& x,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0)) throw NumericError("grad_check: eps must be positive");
  GradCheckReport report;

  const Tensor<double> base = x.detach();
  const double first = evaluate(f, base);
  const double second = evaluate(f, base);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw NumericError("grad_check: function is not deterministic");
  }

  Tensor<double> leaf = x.clone();
  leaf.set_requires_grad(true);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> y = f(leaf);
    if (y.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
    if (y.requires_grad()) tape.backward(y);
  }
  const std::vector<double> analytic = leaf.grad();

  std::vector<std::size_t> indices(x.numel());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (options.max_entries > 0 && options.max_entries < indices.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(options.max_entries);
    std::sort(indices.begin(), indices.end());
  }

  std::vector<double> values = base.to_vector();
  for (std::size_t i : indices) {
    const double orig = values[i];
    values[i] = orig + options.eps;
    const double plus = evaluate(f, Tensor<double>::from(x.shape(), std::span<const double>(values)));
    values[i] = orig - options.eps;
    const double minus = evaluate(f, Tensor<double>::from(x.shape(), std::span<const double>(values)));
    values[i] = orig;
    report.indices.push_back(i);
    report.analytic.push_back(analytic[i]);
    report.numeric.push_back((plus - minus) / (2 * options.eps));
  }

  double scale = 0;
  for (std::size_t k = 0; k < report.indices.size(); ++k) {
    scale = std::max({scale, std::abs(report.analytic[k]), std::abs(report.numeric[k])});
  }
  const double floor = std::max(1e-3 * scale, 1e-12);
  for (std::size_t k = 0; k < report.indices.size(); ++k) {
    const double a = report.analytic[k];
    const double n = report.numeric[k];
    const double abs_err = std::abs(a - n);
    const double rel = abs_err / std::max({std::abs(a), std::abs(n), floor});
    if (!std::isfinite(rel)) throw NumericError("grad_check: non-finite gradient");
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_rel_error || k == 0) {
      if (rel >= report.max_rel_error) report.worst_index = report.indices[k];
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace triplane
