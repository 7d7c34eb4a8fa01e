#pragma once

// Forward-only latency and throughput measurement.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "triplane/config.hpp"

namespace triplane {

struct BenchOptions {
  std::size_t warmup = 3;
  std::size_t iters = 10;
  int threads = 0;  // 0 keeps the runtime default
  bool concurrent_streams = false;
  /// Calls shorter than this are repeated inside one timing sample.
  double min_sample_ms = 5.0;
  std::uint64_t input_seed = 0;

  void validate() const;
};

struct BenchResult {
  std::string label;
  std::string config_hash;  // 16 hex digits
  Variant variant = Variant::hybrid;
  std::array<std::size_t, 3> dims{};
  int threads = 1;
  bool concurrent_streams = false;
  std::size_t warmup = 0;
  std::size_t iters = 0;
  std::size_t batch = 1;  // forward calls per timing sample
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
  double throughput = 0;  // volumes per second, 1000 / mean_ms
  std::uint64_t timed_fresh_allocations = 0;
  std::vector<double> samples_ms;  // per-call latency of each sample

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Builds the model at `dims`, warms up, then times `iters` samples of the
/// same fixed random input. Throws ConfigError for invalid options.
BenchResult bench_forward(const ModelConfig& config, const std::array<std::size_t, 3>& dims,
                          const BenchOptions& options = {}, std::string label = "");

/// Nearest-rank percentile of unsorted values, q in [0, 100].
double percentile(std::vector<double> values, double q);

std::string bench_csv_header();
std::string bench_csv_row(const BenchResult& r);
/// Appends one row, writing the header first when the file is new or empty.
void append_bench_csv(const BenchResult& r, const std::string& path);

}  // namespace triplane
