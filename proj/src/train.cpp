#include "triplane/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "triplane/error.hpp"
#include "triplane/ops.hpp"

namespace triplane {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("train: val_fraction must lie in [0, 1)");
  }
  if (!(positive_weight > 0.0)) throw ConfigError("train: positive_weight must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"val_fraction", c.val_fraction},
          {"positive_weight", c.positive_weight}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "val_fraction") c.val_fraction = value.get<double>();
      else if (key == "positive_weight") c.positive_weight = value.get<double>();
      else throw ConfigError("unknown key 'train." + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for 'train." + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

Adam::Adam(std::vector<Tensor<float>> params, const TrainConfig& cfg)
    : params_(std::move(params)), lr_(cfg.lr), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<float>& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad_span();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * double(g[k]) * g[k];
      const double update = lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      w[k] = static_cast<float>(w[k] - update);
    }
    p.zero_grad();
  }
}

Tensor<float> grid_tensor(const Grid& g) {
  return Tensor<float>::from({1, g.dims[0], g.dims[1], g.dims[2]},
                             std::span<const float>(g.values));
}

Tensor<float> sample_loss(const TriPlaneModel<float>& model, const ShapeSample& s,
                          double positive_weight) {
  const Tensor<float> logits = model.logits(VoxelGrid<float>(grid_tensor(s.input)));
  if (model.config().task == TaskKind::classify) {
    return cross_entropy(logits, static_cast<std::size_t>(s.label));
  }
  return bce_with_logits(logits, grid_tensor(s.target), static_cast<float>(positive_weight));
}

double train_step(TriPlaneModel<float>& model, Adam& opt,
                  const std::vector<const ShapeSample*>& batch, double positive_weight) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const float inv = 1.0f / static_cast<float>(batch.size());
  double total = 0;
  Tape<float> tape;
  TapeScope<float> scope(tape);
  for (const ShapeSample* s : batch) {
    const Tensor<float> loss = sample_loss(model, *s, positive_weight);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      tape.clear();
      throw NumericError("non-finite training loss (" + std::to_string(value) + ") at step " +
                         std::to_string(opt.steps() + 1));
    }
    total += value;
    tape.backward(scale(loss, inv));
  }
  opt.step();
  return total / double(batch.size());
}

EvalResult evaluate(const TriPlaneModel<float>& model, const Dataset& data,
                    const std::vector<std::size_t>& indices, bool with_chamfer) {
  EvalResult r;
  MetricAccumulator acc;
  std::vector<int> predicted, labels;
  const bool classify = model.config().task == TaskKind::classify;
  for (std::size_t idx : indices) {
    const ShapeSample& s = data.samples.at(idx);
    const Tensor<float> logits = model.logits(VoxelGrid<float>(grid_tensor(s.input)));
    if (classify) {
      const auto v = logits.data();
      predicted.push_back(static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()));
      labels.push_back(s.label);
      r.loss += cross_entropy(logits, static_cast<std::size_t>(s.label)).item();
    } else {
      r.loss += bce_with_logits(logits, grid_tensor(s.target)).item();
      std::vector<float> prob(logits.numel());
      const auto z = logits.data();
      for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = 1.0f / (1.0f + std::exp(-z[i]));
      MetricSet m;
      if (with_chamfer) {
        m = metric_suite(prob, s.target.values, s.target.dims);
      } else {
        m.iou = iou(prob, s.target.values);
        m.f_score = f_score(prob, s.target.values);
      }
      acc.add(m);
    }
    ++r.samples;
  }
  if (r.samples) r.loss /= double(r.samples);
  if (classify) {
    r.metrics.accuracy = accuracy(predicted, labels);
  } else {
    r.metrics = acc.mean();
    r.undefined_chamfer = with_chamfer ? acc.undefined_chamfer : 0;
  }
  return r;
}

EvalResult evaluate(const TriPlaneModel<float>& model, const Dataset& data, bool with_chamfer) {
  std::vector<std::size_t> all(data.samples.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate(model, data, all, with_chamfer);
}

Checkpoint make_checkpoint(TriPlaneModel<float>& model, long epoch) {
  Checkpoint c;
  c.config = model.config();
  c.epoch = epoch;
  model.visit([&](const std::string& name, Tensor<float>& t) {
    c.params.emplace_back(name, Tensor<float>::from(t.shape(), t.data()));
  });
  return c;
}

void load_into(TriPlaneModel<float>& model, const Checkpoint& c) {
  std::size_t i = 0;
  model.visit([&](const std::string& name, Tensor<float>& t) {
    if (i >= c.params.size() || c.params[i].first != name ||
        c.params[i].second.shape() != t.shape()) {
      throw ConfigError("checkpoint does not match the model at parameter '" + name + "'");
    }
    const auto src = c.params[i].second.data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
    ++i;
  });
  if (i != c.params.size()) throw ConfigError("checkpoint has extra parameters");
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  json params = json::array();
  for (const auto& [name, t] : c.params) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"data", t.to_vector()}});
  }
  json j = {{"format", "triplane-checkpoint"},
            {"config", to_json(c.config)},
            {"epoch", c.epoch},
            {"params", params}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
  if (!out) throw IoError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "triplane-checkpoint") {
    throw IoError("'" + path + "' is not a triplane checkpoint");
  }
  Checkpoint c;
  c.config = model_config_from_json(j.at("config"));
  try {
    c.epoch = j.at("epoch").get<long>();
    for (const auto& p : j.at("params")) {
      const auto shape = p.at("shape").get<Shape>();
      const auto data = p.at("data").get<std::vector<float>>();
      if (data.size() != shape_numel(shape)) throw IoError("parameter size mismatch");
      c.params.emplace_back(p.at("name").get<std::string>(),
                            Tensor<float>::from(shape, std::span<const float>(data)));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint '" + path + "': " + e.what());
  }
  return c;
}

namespace {

void append_eval_rows(std::vector<MetricRow>& log, long epoch, const std::string& split,
                      const EvalResult& r) {
  log.push_back({epoch, split, "loss", r.loss});
  const MetricSet& m = r.metrics;
  for (auto [name, v] : {std::pair{"accuracy", m.accuracy}, std::pair{"iou", m.iou},
                         std::pair{"f_score", m.f_score}, std::pair{"chamfer_l2", m.chamfer_l2}}) {
    if (!std::isnan(v)) log.push_back({epoch, split, name, v});
  }
}

double score_of(const EvalResult& r, TaskKind task) {
  return task == TaskKind::classify ? r.metrics.accuracy : r.metrics.iou;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.samples.empty()) throw ConfigError("train: empty dataset");
  if (data.spec.task != model_config.task) {
    throw ConfigError("train: dataset task '" + to_string(data.spec.task) +
                      "' does not match model task '" + to_string(model_config.task) + "'");
  }
  ModelConfig mc = model_config;
  mc.dims = data.spec.dims;
  TriPlaneModel<float> model(mc);
  std::vector<Tensor<float>> params;
  model.visit([&](const std::string&, Tensor<float>& t) { params.push_back(t); });
  Adam opt(params, cfg);

  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * double(order.size())));
  if (cfg.val_fraction > 0.0 && n_val == 0 && order.size() > 1) n_val = 1;
  n_val = std::min(n_val, order.size() - 1);
  result.val_indices.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  result.train_indices.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::sort(result.val_indices.begin(), result.val_indices.end());

  const std::string val_split = n_val ? "val" : "train";
  const std::vector<std::size_t>& val = n_val ? result.val_indices : result.train_indices;
  bool have_best = false;
  std::vector<std::size_t> epoch_order = result.train_indices;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(epoch_order.begin(), epoch_order.end(), rng);
    double loss_sum = 0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < epoch_order.size(); b += cfg.batch_size) {
      std::vector<const ShapeSample*> batch;
      for (std::size_t i = b; i < std::min(epoch_order.size(), b + cfg.batch_size); ++i) {
        batch.push_back(&data.samples[epoch_order[i]]);
      }
      try {
        loss_sum += train_step(model, opt, batch, cfg.positive_weight);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in epoch " + std::to_string(epoch));
      }
      ++steps;
    }
    const double train_loss = loss_sum / double(steps);
    result.log.push_back({long(epoch), "train", "loss", train_loss});
    const EvalResult v = evaluate(model, data, val, false);
    append_eval_rows(result.log, long(epoch), val_split, v);
    const double score = score_of(v, mc.task);
    if (!have_best || score > result.best_score) {
      result.best = make_checkpoint(model, long(epoch));
      result.best_score = score;
      have_best = true;
    }
    if (on_epoch) on_epoch(epoch, train_loss, v);
  }
  return result;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics '" + path + "'");
  out << "epoch,split,metric,value\n";
  out.precision(17);
  for (const auto& r : rows) out << r.epoch << "," << r.split << "," << r.metric << "," << r.value << "\n";
  if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "epoch,split,metric,value") {
    throw IoError("'" + path + "' is not a metrics CSV (expected header epoch,split,metric,value)");
  }
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string epoch, split, metric, value;
    if (!std::getline(ss, epoch, ',') || !std::getline(ss, split, ',') ||
        !std::getline(ss, metric, ',') || !std::getline(ss, value)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected four fields");
    }
    try {
      rows.push_back({std::stol(epoch), split, metric, std::stod(value)});
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

}  // namespace triplane
