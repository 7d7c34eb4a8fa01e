#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "triplane/tensor.hpp"

namespace triplane {

struct GradCheckOptions {
  double eps = 1e-6;
  double tol = 1e-4;
  // 0 checks every entry; otherwise a seeded random subset of that size.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t worst_index = 0;
  std::vector<std::size_t> indices;
  std::vector<double> analytic;
  std::vector<double> numeric;
  bool passed = false;
};

using ScalarFunction = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the tape gradient of scalar `f` at `x` with central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps. Relative error per entry is
/// |a - n| / max(|a|, |n|, 1e-3 * largest gradient magnitude). Throws
/// NumericError when two evaluations of `f` at `x` disagree.
GradCheckReport grad_check(const ScalarFunction& f, const Tensor<double>& x,
                           const GradCheckOptions& options = {});

}  // namespace triplane
