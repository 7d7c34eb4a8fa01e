#include "triplane/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "triplane/error.hpp"
#include "triplane/model.hpp"

namespace triplane {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void BenchOptions::validate() const {
  if (warmup < 3) throw ConfigError("bench: warmup must be >= 3");
  if (iters < 10) throw ConfigError("bench: iters must be >= 10");
  if (threads < 0) throw ConfigError("bench: threads must be >= 0");
  if (!(min_sample_ms >= 0.0)) throw ConfigError("bench: min_sample_ms must be >= 0");
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw Error("percentile: q must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * double(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

BenchResult bench_forward(const ModelConfig& config, const std::array<std::size_t, 3>& dims,
                          const BenchOptions& options, std::string label) {
  options.validate();
  ModelConfig c = config;
  c.dims = dims;
  c.validate();
  if (options.threads > 0) set_num_threads(options.threads);

  TriPlaneModel<float> model(c);
  model.set_concurrent_streams(options.concurrent_streams);
  std::mt19937_64 rng(options.input_seed);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  std::vector<float> values(c.in_channels * dims[0] * dims[1] * dims[2]);
  for (auto& v : values) v = dist(rng);
  const VoxelGrid<float> input(
      Tensor<float>::from({c.in_channels, dims[0], dims[1], dims[2]}, std::span<const float>(values)));

  auto run = [&] { (void)model.logits(input); };
  for (std::size_t i = 0; i < options.warmup; ++i) run();

  auto t0 = Clock::now();
  run();
  const double single = elapsed_ms(t0, Clock::now());
  std::size_t batch = 1;
  if (single < options.min_sample_ms) {
    batch = static_cast<std::size_t>(std::ceil(options.min_sample_ms / std::max(single, 1e-6)));
  }

  BenchResult r;
  r.label = label.empty() ? to_string(c.variant) : std::move(label);
  r.config_hash = hex64(config_hash(c));
  r.variant = c.variant;
  r.dims = dims;
  r.threads = num_threads();
  r.concurrent_streams = options.concurrent_streams;
  r.warmup = options.warmup;
  r.iters = options.iters;
  r.batch = batch;

  const AllocationStats before = allocation_stats();
  for (std::size_t i = 0; i < options.iters; ++i) {
    t0 = Clock::now();
    for (std::size_t b = 0; b < batch; ++b) run();
    r.samples_ms.push_back(elapsed_ms(t0, Clock::now()) / double(batch));
  }
  r.timed_fresh_allocations = allocation_stats().fresh - before.fresh;

  r.mean_ms = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / double(r.samples_ms.size());
  r.median_ms = percentile(r.samples_ms, 50.0);
  r.p95_ms = percentile(r.samples_ms, 95.0);
  r.throughput = r.mean_ms > 0 ? 1000.0 / r.mean_ms : 0.0;
  return r;
}

nlohmann::json BenchResult::to_json() const {
  return {{"label", label},
          {"config_hash", config_hash},
          {"variant", to_string(variant)},
          {"dims", dims},
          {"threads", threads},
          {"concurrent_streams", concurrent_streams},
          {"warmup", warmup},
          {"iters", iters},
          {"batch", batch},
          {"mean_ms", mean_ms},
          {"median_ms", median_ms},
          {"p95_ms", p95_ms},
          {"throughput", throughput},
          {"timed_fresh_allocations", timed_fresh_allocations},
          {"samples_ms", samples_ms}};
}

std::string BenchResult::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-8s %zux%zux%zu  threads %d%s\n", label.c_str(),
                to_string(variant).c_str(), dims[0], dims[1], dims[2], threads,
                concurrent_streams ? "  concurrent" : "");
  os << line;
  std::snprintf(line, sizeof line,
                "  mean %.3f ms  median %.3f ms  p95 %.3f ms  %.2f vol/s  (%zu x %zu calls, hash %s)\n",
                mean_ms, median_ms, p95_ms, throughput, iters, batch, config_hash.c_str());
  os << line;
  return os.str();
}

std::string bench_csv_header() {
  return "label,config_hash,variant,dx,dy,dz,threads,concurrent,warmup,iters,batch,mean_ms,median_ms,"
         "p95_ms,throughput,timed_fresh_allocations";
}

std::string bench_csv_row(const BenchResult& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.label << ',' << r.config_hash << ',' << to_string(r.variant) << ',' << r.dims[0] << ','
     << r.dims[1] << ',' << r.dims[2] << ',' << r.threads << ',' << (r.concurrent_streams ? 1 : 0) << ','
     << r.warmup << ',' << r.iters << ',' << r.batch << ',' << r.mean_ms << ',' << r.median_ms << ','
     << r.p95_ms << ',' << r.throughput << ',' << r.timed_fresh_allocations;
  return os.str();
}

void append_bench_csv(const BenchResult& r, const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to '" + path + "'");
  if (fresh) out << bench_csv_header() << '\n';
  out << bench_csv_row(r) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace triplane
