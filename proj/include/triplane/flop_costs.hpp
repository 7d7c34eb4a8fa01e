#pragma once

#include <cstdint>

// Per-element operation counts charged by the tensor engine's forward
// kernels. The analytic FLOPs model uses the same table, so an instrumented
// run and the formula agree by construction of the counting rules, not of
// the code paths.
namespace triplane::flop_cost {

inline constexpr std::uint64_t kElementwise = 1;    // add, sub, mul, scale, relu
inline constexpr std::uint64_t kSigmoid = 4;
inline constexpr std::uint64_t kSoftmax = 4;        // max-shift, exp, sum, divide
inline constexpr std::uint64_t kLayerNorm = 8;      // moments, normalise, affine
inline constexpr std::uint64_t kLinearInterp = 3;   // (1-t)*a + t*b
inline constexpr std::uint64_t kMultiplyAdd = 2;

}  // namespace triplane::flop_cost
