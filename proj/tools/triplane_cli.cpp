// triplane: data generation, training, evaluation, FLOPs reports, benchmarks
// and plots from one entry point.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 I/O error,
// 3 numeric failure. Failures print one JSON line on stderr:
//   {"error":"config","code":1,"message":"..."}

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "triplane/bench.hpp"
#include "triplane/config.hpp"
#include "triplane/error.hpp"
#include "triplane/flops.hpp"
#include "triplane/plot.hpp"
#include "triplane/shapes.hpp"
#include "triplane/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace triplane;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

int fail(const char* kind, int code, const std::string& message) {
  std::cerr << json{{"error", kind}, {"code", code}, {"message", message}}.dump() << std::endl;
  return code;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

std::array<std::size_t, 3> parse_dims(const std::vector<std::size_t>& v) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError("--dims takes one or three integers");
}

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Common {
  int threads = 0;
};

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t count = 100;
  std::vector<std::size_t> dims{32};
  std::string task = "complete";
  double occlusion = 0.4;
};

void run_gen_data(const GenDataArgs& a) {
  DatasetSpec spec;
  spec.task = parse_task(a.task);
  spec.count = a.count;
  spec.dims = parse_dims(a.dims);
  spec.seed = a.seed;
  spec.occlusion = a.occlusion;
  const Dataset d = gen_shapes(spec);
  make_dir(a.out);
  save_dataset(d, a.out);

  std::array<std::size_t, kNumShapeClasses> hist{};
  double occupied = 0;
  for (const auto& s : d.samples) {
    ++hist[std::size_t(s.label)];
    occupied += double(s.target.occupied()) / double(s.target.numel());
  }
  json report{{"command", "gen-data"},
              {"out", a.out},
              {"task", to_string(spec.task)},
              {"count", spec.count},
              {"dims", spec.dims},
              {"seed", spec.seed},
              {"occlusion", spec.occlusion},
              {"class_counts", hist},
              {"mean_target_occupancy", occupied / double(d.samples.size())}};
  std::cout << "gen-data: " << spec.count << " " << to_string(spec.task) << " samples at " << spec.dims[0] << "x"
            << spec.dims[1] << "x" << spec.dims[2] << " -> " << a.out << "\n"
            << "  classes sphere/box/torus/cone: " << hist[0] << "/" << hist[1] << "/" << hist[2] << "/" << hist[3]
            << "\n  mean target occupancy " << fmt(occupied / double(d.samples.size())) << "\n";
  write_json(fs::path(a.out) / "gen-data.json", report);
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string test;
  std::string out;
  std::string train_config;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr, val_fraction, positive_weight;
  std::optional<std::uint64_t> seed;
  std::string task;
};

json metrics_json(const MetricSet& m) { return to_json(m); }

void run_train(const TrainArgs& a) {
  ModelConfig mc = load_model_config(a.config);
  if (!a.task.empty()) mc.task = parse_task(a.task);
  TrainConfig tc;
  if (!a.train_config.empty()) {
    std::ifstream in(a.train_config);
    if (!in) throw IoError("cannot open train config '" + a.train_config + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("train config '" + a.train_config + "' is not valid JSON: " + e.what());
    }
    tc = train_config_from_json(j);
  }
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.lr = *a.lr;
  if (a.val_fraction) tc.val_fraction = *a.val_fraction;
  if (a.positive_weight) tc.positive_weight = *a.positive_weight;
  if (a.seed) tc.seed = *a.seed;
  tc.validate();

  const Dataset data = load_dataset(a.data);
  std::optional<Dataset> test;
  if (!a.test.empty()) {
    test = load_dataset(a.test);
    if (test->spec.dims != data.spec.dims || test->spec.task != data.spec.task) {
      throw ConfigError("test set dims or task differ from the training set");
    }
  }
  mc.dims = data.spec.dims;
  mc.validate();
  make_dir(a.out);
  save_model_config(mc, (fs::path(a.out) / "config.json").string());

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(mc, data, tc, [&](std::size_t epoch, double loss, const EvalResult& v) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "epoch " << epoch << "/" << tc.epochs << " loss " << fmt(loss) << " val "
              << (mc.task == TaskKind::classify ? "acc " + fmt(v.metrics.accuracy) : "iou " + fmt(v.metrics.iou))
              << "  (" << fmt(secs, "%.1f") << " s)\n";
  });

  const FlopsReport flops = count_model(mc, mc.dims);
  TriPlaneModel<float> best(mc);
  load_into(best, r.best);
  std::vector<MetricRow> log{{0, "model", "gflops", double(flops.total) * 1e-9},
                             {0, "model", "params", double(best.parameter_count())}};
  log.insert(log.end(), r.log.begin(), r.log.end());
  json report{{"command", "train"},
              {"config", to_json(mc)},
              {"train_config", to_json(tc)},
              {"data", a.data},
              {"best_epoch", r.best.epoch},
              {"best_val_score", r.best_score},
              {"gflops", double(flops.total) * 1e-9},
              {"params", best.parameter_count()},
              {"train_samples", r.train_indices.size()},
              {"val_samples", r.val_indices.size()}};
  std::cout << "train: " << to_string(mc.variant) << " " << to_string(mc.task) << ", " << tc.epochs
            << " epochs, best epoch " << r.best.epoch << " val "
            << (mc.task == TaskKind::classify ? "accuracy " : "iou ") << fmt(r.best_score) << "\n";
  if (test) {
    const EvalResult e = evaluate(best, *test, true);
    const MetricSet& m = e.metrics;
    for (auto [name, v] : {std::pair{"loss", e.loss}, std::pair{"accuracy", m.accuracy}, std::pair{"iou", m.iou},
                           std::pair{"f_score", m.f_score}, std::pair{"chamfer_l2", m.chamfer_l2}}) {
      if (!std::isnan(v)) log.push_back({-1, "test", name, v});
    }
    report["test"] = metrics_json(m);
    report["test"]["loss"] = e.loss;
    report["test_data"] = a.test;
    std::cout << "  test " << (mc.task == TaskKind::classify ? "accuracy " + fmt(m.accuracy)
                                                             : "iou " + fmt(m.iou) + " f " + fmt(m.f_score) +
                                                                   " chamfer " + fmt(m.chamfer_l2))
              << "\n";
  }
  save_checkpoint(r.best, (fs::path(a.out) / "checkpoint.json").string());
  write_metrics_csv(log, (fs::path(a.out) / "metrics.csv").string());
  write_json(fs::path(a.out) / "train.json", report);
  std::cout << "  wrote " << (fs::path(a.out) / "checkpoint.json").string() << ", metrics.csv, train.json\n";
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

void run_eval(const EvalArgs& a) {
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  if (data.spec.task != c.config.task) throw ConfigError("dataset task does not match the checkpoint");
  if (data.spec.dims != c.config.dims) throw ConfigError("dataset dims do not match the checkpoint");
  TriPlaneModel<float> model(c.config);
  load_into(model, c);
  const EvalResult e = evaluate(model, data, true);
  json report{{"command", "eval"},
              {"checkpoint", a.checkpoint},
              {"data", a.data},
              {"config", to_json(c.config)},
              {"epoch", c.epoch},
              {"samples", e.samples},
              {"loss", e.loss},
              {"metrics", to_json(e.metrics)},
              {"undefined_chamfer", e.undefined_chamfer}};
  std::cout << "eval: " << e.samples << " samples, loss " << fmt(e.loss) << "\n";
  const MetricSet& m = e.metrics;
  if (!std::isnan(m.accuracy)) std::cout << "  accuracy   " << fmt(m.accuracy) << "\n";
  if (!std::isnan(m.iou)) std::cout << "  iou        " << fmt(m.iou) << "\n";
  if (!std::isnan(m.f_score)) std::cout << "  f_score    " << fmt(m.f_score) << "\n";
  if (!std::isnan(m.chamfer_l2)) std::cout << "  chamfer_l2 " << fmt(m.chamfer_l2) << "\n";
  const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() / "eval.json" : fs::path(a.out);
  write_json(out, report);
}

// ---- flops ----------------------------------------------------------------

struct FlopsArgs {
  std::string config;
  std::vector<std::string> compare;
  std::vector<std::size_t> dims;
  std::string out = "flops.json";
};

void run_flops(const FlopsArgs& a) {
  std::vector<std::pair<std::string, ModelConfig>> configs;
  configs.emplace_back(fs::path(a.config).stem().string(), load_model_config(a.config));
  for (const auto& p : a.compare) configs.emplace_back(fs::path(p).stem().string(), load_model_config(p));
  const auto dims = a.dims.empty() ? configs.front().second.dims : parse_dims(a.dims);
  json report{{"command", "flops"}, {"dims", dims}, {"configs", json::object()}};
  for (const auto& [name, c] : configs) report["configs"][name] = to_json(c);
  if (configs.size() == 1) {
    const FlopsReport r = count_model(configs[0].second, dims, configs[0].first);
    std::cout << r.to_table();
    report["report"] = r.to_json();
  } else {
    const Comparison cmp = compare(configs, dims);
    std::cout << cmp.to_table();
    report["comparison"] = cmp.to_json();
  }
  write_json(a.out, report);
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string config;
  std::vector<std::size_t> dims;
  std::size_t iters = 10;
  std::size_t warmup = 3;
  bool concurrent = false;
  double min_sample_ms = 5.0;
  std::uint64_t seed = 0;
  std::string ledger;
  std::string out = "bench.json";
};

void run_bench(const BenchArgs& a, const Common& common) {
  const ModelConfig c = load_model_config(a.config);
  BenchOptions o;
  o.iters = a.iters;
  o.warmup = a.warmup;
  o.threads = common.threads;
  o.concurrent_streams = a.concurrent;
  o.min_sample_ms = a.min_sample_ms;
  o.input_seed = a.seed;
  const auto dims = a.dims.empty() ? c.dims : parse_dims(a.dims);
  const BenchResult r = bench_forward(c, dims, o, fs::path(a.config).stem().string());
  std::cout << r.to_table();
  if (r.timed_fresh_allocations) {
    std::cerr << "warning: " << r.timed_fresh_allocations << " buffer allocations inside the timed region\n";
  }
  json report = r.to_json();
  report["command"] = "bench";
  ModelConfig echoed = c;
  echoed.dims = dims;
  report["config"] = to_json(echoed);
  write_json(a.out, report);
  if (!a.ledger.empty()) append_bench_csv(r, a.ledger);
}

// ---- plot -----------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> metrics;
  std::vector<std::string> labels;
  std::string out;
  std::string x = "gflops";
  std::string metric;
  std::string split = "val";
  std::string title;
};

void run_plot(const PlotArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.metrics.size()) {
    throw ConfigError("--labels needs one label per metrics file");
  }
  if (a.x != "gflops" && a.x != "epoch") throw ConfigError("--x must be gflops or epoch");
  const PlotAxis axis = a.x == "gflops" ? PlotAxis::gflops : PlotAxis::epoch;
  std::vector<PlotSeries> series;
  std::string metric = a.metric;
  json report{{"command", "plot"}, {"out", a.out}, {"x", a.x}, {"series", json::array()}};
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    const auto rows = read_metrics_csv(a.metrics[i]);
    if (metric.empty()) metric = default_metric(rows);
    std::string label = a.labels.empty() ? fs::path(a.metrics[i]).parent_path().filename().string() : a.labels[i];
    if (label.empty()) label = fs::path(a.metrics[i]).stem().string();
    series.push_back(series_from_metrics(rows, label, axis, metric, a.split));
    json pts = json::array();
    for (auto [x, y] : series.back().points) pts.push_back({x, y});
    report["series"].push_back({{"label", label}, {"source", a.metrics[i]}, {"points", pts}});
  }
  PlotSpec spec;
  spec.title = a.title.empty() ? (axis == PlotAxis::gflops ? metric + " against computational cost" : metric + " per epoch")
                               : a.title;
  spec.x_label = axis == PlotAxis::gflops ? "GFLOPs (log scale)" : "epoch";
  spec.y_label = metric;
  spec.log_x = axis == PlotAxis::gflops;
  write_text(a.out, render_svg(series, spec));
  report["metric"] = metric;
  std::cout << "plot: " << series.size() << " series of " << metric << " -> " << a.out << "\n";
  for (const auto& s : report["series"]) std::cout << "  " << s["label"].get<std::string>() << " " << s["points"].dump() << "\n";
  fs::path json_path = a.out;
  json_path.replace_extension(".json");
  write_json(json_path, report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-plane hybrid voxel networks: data, training, evaluation, FLOPs, benchmarks, plots"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (0 keeps the runtime default)")
      ->envname("TRIPLANE_THREADS")
      ->check(CLI::NonNegativeNumber);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic shape dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--count", gen.count, "Number of samples");
  gen_cmd->add_option("--dims", gen.dims, "Grid size: one value or three")->expected(1, 3);
  gen_cmd->add_option("--task", gen.task, "classify or complete");
  gen_cmd->add_option("--occlusion", gen.occlusion, "Fraction of occupied voxels removed (completion)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best validation checkpoint");
  train_cmd->add_option("--config", tr.config, "Model config JSON")->required();
  train_cmd->add_option("--data", tr.data, "Training dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--test", tr.test, "Optional test dataset evaluated with the best checkpoint");
  train_cmd->add_option("--train-config", tr.train_config, "Training hyperparameters JSON");
  train_cmd->add_option("--task", tr.task, "Override the config task");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--val-fraction", tr.val_fraction);
  train_cmd->add_option("--positive-weight", tr.positive_weight);
  train_cmd->add_option("--seed", tr.seed);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--out", ev.out, "JSON report (default: eval.json next to the checkpoint)");

  FlopsArgs fl;
  auto* flops_cmd = app.add_subcommand("flops", "Analytic FLOP report, optionally compared across configs");
  flops_cmd->add_option("--config", fl.config)->required();
  flops_cmd->add_option("--compare", fl.compare, "Further configs");
  flops_cmd->add_option("--dims", fl.dims, "Override the config dims")->expected(1, 3);
  flops_cmd->add_option("--out", fl.out, "JSON report");

  BenchArgs bn;
  auto* bench_cmd = app.add_subcommand("bench", "Forward-only throughput benchmark");
  bench_cmd->add_option("--config", bn.config)->required();
  bench_cmd->add_option("--dims", bn.dims, "Override the config dims")->expected(1, 3);
  bench_cmd->add_option("--iters", bn.iters, "Measured samples (>= 10)");
  bench_cmd->add_option("--warmup", bn.warmup, "Warmup calls (>= 3)");
  bench_cmd->add_option("--threads", common.threads, "Worker threads")
      ->envname("TRIPLANE_THREADS")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_flag("--concurrent", bn.concurrent, "Run the 2D and 3D streams concurrently");
  bench_cmd->add_option("--min-sample-ms", bn.min_sample_ms, "Batch calls shorter than this");
  bench_cmd->add_option("--seed", bn.seed, "Input seed");
  bench_cmd->add_option("--ledger", bn.ledger, "CSV ledger to append to");
  bench_cmd->add_option("--out", bn.out, "JSON report");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "SVG plot of metric logs");
  plot_cmd->add_option("--metrics", pl.metrics, "Metric CSV files, one series each")->required();
  plot_cmd->add_option("--out", pl.out, "SVG output")->required();
  plot_cmd->add_option("--labels", pl.labels, "Series labels (default: parent directory names)");
  plot_cmd->add_option("--x", pl.x, "gflops or epoch");
  plot_cmd->add_option("--metric", pl.metric, "Metric name (default iou, else accuracy)");
  plot_cmd->add_option("--split", pl.split, "Split for epoch curves and the best-value fallback");
  plot_cmd->add_option("--title", pl.title);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", kExitConfig, e.what());
  }

  try {
    if (common.threads > 0) set_num_threads(common.threads);
    if (*gen_cmd) run_gen_data(gen);
    if (*train_cmd) run_train(tr);
    if (*eval_cmd) run_eval(ev);
    if (*flops_cmd) run_flops(fl);
    if (*bench_cmd) run_bench(bn, common);
    if (*plot_cmd) run_plot(pl);
  } catch (const ConfigError& e) {
    return fail("config", kExitConfig, e.what());
  } catch (const ShapeError& e) {
    return fail("config", kExitConfig, e.what());
  } catch (const IoError& e) {
    return fail("io", kExitIo, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", kExitNumeric, e.what());
  } catch (const std::exception& e) {
    return fail("internal", 4, e.what());
  }
  return 0;
}
