#pragma once

// Adam training loop, evaluation and checkpoints for TriPlaneModel<float>.

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triplane/metrics.hpp"
#include "triplane/model.hpp"
#include "triplane/shapes.hpp"

namespace triplane {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  double positive_weight = 1.0;  // completion BCE weight on occupied voxels

  bool operator==(const TrainConfig&) const = default;
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

class Adam {
 public:
  Adam(std::vector<Tensor<float>> params, const TrainConfig& cfg);
  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor<float>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

Tensor<float> grid_tensor(const Grid& g);

/// Per-sample loss; the graph is recorded on the caller's active tape.
Tensor<float> sample_loss(const TriPlaneModel<float>& model, const ShapeSample& s,
                          double positive_weight = 1.0);

/// One optimiser step over a batch: gradients of the mean loss are
/// accumulated sample by sample. Returns the mean loss. Throws NumericError on
/// a non-finite loss.
double train_step(TriPlaneModel<float>& model, Adam& opt,
                  const std::vector<const ShapeSample*>& batch, double positive_weight = 1.0);

struct EvalResult {
  MetricSet metrics;
  double loss = 0;
  std::size_t samples = 0;
  std::size_t undefined_chamfer = 0;
};

/// Completion: probabilities sigmoid(logit) scored with the dense metrics.
/// Classification: argmax accuracy.
EvalResult evaluate(const TriPlaneModel<float>& model, const Dataset& data,
                    const std::vector<std::size_t>& indices, bool with_chamfer = true);
EvalResult evaluate(const TriPlaneModel<float>& model, const Dataset& data, bool with_chamfer = true);

struct MetricRow {
  long epoch = 0;
  std::string split;
  std::string metric;
  double value = 0;
  bool operator==(const MetricRow&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  long epoch = -1;
  std::vector<std::pair<std::string, Tensor<float>>> params;  // detached copies
};

Checkpoint make_checkpoint(TriPlaneModel<float>& model, long epoch);
/// Copies checkpoint values into a model built from the same config.
void load_into(TriPlaneModel<float>& model, const Checkpoint& c);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
  Checkpoint best;
  double best_score = 0;
  std::vector<MetricRow> log;
  std::vector<std::size_t> train_indices, val_indices;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, const EvalResult& val)>;

/// Deterministic for a given seed. Keeps the checkpoint with the best
/// validation score (IoU for completion, accuracy for classification).
TrainResult train(const ModelConfig& model_config, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

}  // namespace triplane
