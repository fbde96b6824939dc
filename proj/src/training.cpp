#include "memesent/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "memesent/checkpoint.hpp"
#include "memesent/error.hpp"
#include "memesent/evaluation.hpp"
#include "memesent/rng.hpp"

namespace memesent {

using nlohmann::json;
using nlohmann::ordered_json;

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  if (!(lr_base > 0.0) || !(lr_base < lr_max)) throw UsageError("need 0 < lr_base < lr_max");
  if (lr_step_size < 1) throw UsageError("lr_step_size must be at least 1");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (max_epochs < 1) throw UsageError("max_epochs must be at least 1");
  if (patience < 1) throw UsageError("patience must be at least 1");
  if (weight_decay < 0.0) throw UsageError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw UsageError("eps must be positive");
  if (hidden_size < 1) throw UsageError("hidden_size must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train_fraction must lie strictly between 0 and 1");
  }
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["lr_base"] = c.lr_base;
  j["lr_max"] = c.lr_max;
  j["lr_step_size"] = c.lr_step_size;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["eval_metric"] = c.eval_metric == EvalMetric::MacroF1 ? "macro_f1" : "weighted_f1";
  j["hidden_size"] = c.hidden_size;
  j["mask_pads"] = c.mask_pads;
  j["train_fraction"] = c.train_fraction;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr_base") c.lr_base = value.get<double>();
      else if (key == "lr_max") c.lr_max = value.get<double>();
      else if (key == "lr_step_size") c.lr_step_size = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "eval_metric") {
        const auto name = value.get<std::string>();
        if (name == "macro_f1") c.eval_metric = EvalMetric::MacroF1;
        else if (name == "weighted_f1") c.eval_metric = EvalMetric::WeightedF1;
        else throw UsageError("eval_metric must be macro_f1 or weighted_f1");
      } else if (key == "hidden_size") c.hidden_size = value.get<int>();
      else if (key == "mask_pads") c.mask_pads = value.get<bool>();
      else if (key == "train_fraction") c.train_fraction = value.get<double>();
      else throw UsageError("unknown train config key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open train config " + path.string());
  try {
    return train_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ pieces

std::array<double, 3> class_weights(const std::array<std::int64_t, 3>& counts) {
  std::int64_t total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[c] < 1) {
      throw DataError("class " + std::string(to_string(label_from_index(c))) +
                      " has no training samples");
    }
    total += counts[c];
  }
  std::array<double, 3> w{};
  for (int c = 0; c < kNumClasses; ++c) {
    w[c] = static_cast<double>(total) / (kNumClasses * static_cast<double>(counts[c]));
  }
  return w;
}

std::array<std::int64_t, 3> class_counts(std::span<const FeatureRecord> records) {
  std::array<std::int64_t, 3> counts{};
  for (const auto& r : records) ++counts[class_index(r.label)];
  return counts;
}

double triangular_lr(std::int64_t iteration, const TrainConfig& config) {
  const double step = static_cast<double>(config.lr_step_size);
  const double it = static_cast<double>(iteration);
  const double cycle = std::floor(1.0 + it / (2.0 * step));
  const double x = std::abs(it / step - 2.0 * cycle + 1.0);
  return config.lr_base + (config.lr_max - config.lr_base) * std::max(0.0, 1.0 - x);
}

double nll_loss(const Matrix& log_probs, std::span<const int> labels, const std::array<double, 3>& weights) {
  if (log_probs.rows() != static_cast<Eigen::Index>(labels.size()) || log_probs.cols() != kNumClasses) {
    throw DataError("log-prob matrix shape does not match labels");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const int y = labels[b];
    if (y < 0 || y >= kNumClasses) throw DataError("label out of range");
    num += weights[y] * -log_probs(static_cast<Eigen::Index>(b), y);
    den += weights[y];
  }
  return den > 0.0 ? num / den : 0.0;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw UsageError("patience must be at least 1");
}

bool EarlyStopping::update(int epoch, double metric) {
  if (best_epoch_ < 0 || metric > best_metric_) {
    best_epoch_ = epoch;
    best_metric_ = metric;
    epochs_without_improvement_ = 0;
    return true;
  }
  ++epochs_without_improvement_;
  return false;
}

AdamW::AdamW(const ModelParams& shape, const TrainConfig& config)
    : m_(shape.zeros_like()), v_(shape.zeros_like()), beta1_(config.beta1), beta2_(config.beta2),
      eps_(config.eps), weight_decay_(config.weight_decay) {}

void AdamW::step(ModelParams& params, const ModelParams& grad, double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  std::vector<double*> p_data, m_data, v_data;
  std::vector<const double*> g_data;
  std::vector<Eigen::Index> sizes;
  params.for_each_tensor([&](const std::string&, double* d, Eigen::Index r, Eigen::Index c) {
    p_data.push_back(d);
    sizes.push_back(r * c);
  });
  grad.for_each_tensor(
      [&](const std::string&, const double* d, Eigen::Index, Eigen::Index) { g_data.push_back(d); });
  m_.for_each_tensor([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { m_data.push_back(d); });
  v_.for_each_tensor([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { v_data.push_back(d); });
  if (g_data.size() != p_data.size()) throw DataError("gradient does not match parameters");

  const double step_size = lr / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t t = 0; t < p_data.size(); ++t) {
    double* p = p_data[t];
    const double* g = g_data[t];
    double* m = m_data[t];
    double* v = v_data[t];
    for (Eigen::Index i = 0; i < sizes[t]; ++i) {
      p[i] *= 1.0 - lr * weight_decay_;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) / sqrt_bc2 + eps_);
    }
  }
}

ordered_json to_json(const EpochRecord& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  if (r.train_loss) j["train_loss"] = *r.train_loss;
  else j["train_loss"] = nullptr;
  j["val_macro_f1"] = r.val_macro_f1;
  j["val_weighted_f1"] = r.val_weighted_f1;
  j["lr_first"] = r.lr_first;
  j["lr_last"] = r.lr_last;
  j["iterations"] = r.iterations;
  j["improved"] = r.improved;
  return j;
}

// ------------------------------------------------------------------ loop

namespace {

ConfusionMatrix confusion_on(const ModelParams& params, std::span<const ModelInput> inputs,
                             std::span<const int> labels) {
  std::vector<int> predicted;
  predicted.reserve(inputs.size());
  for (const auto& in : inputs) predicted.push_back(predict_class(forward_one(params, in)));
  return confusion_matrix(labels, predicted);
}

std::vector<int> labels_of(std::span<const FeatureRecord> records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(class_index(r.label));
  return out;
}

EncoderDims dims_of(std::span<const FeatureRecord> records) {
  const FeatureRecord& r = records.front();
  return EncoderDims{static_cast<int>(r.text_embedding.size()), static_cast<int>(r.image_embedding.size()),
                     static_cast<int>(r.face_slots[0].embedding.size())};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_history(const std::filesystem::path& dir, const TrainResult& result) {
  std::string text;
  for (const auto& e : result.history) text += to_json(e).dump() + "\n";
  write_text(dir / "history.jsonl", text);
}

void write_lr_trace(const std::filesystem::path& dir, const std::vector<double>& trace) {
  std::string text = "iteration,lr\n";
  char line[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", i, trace[i]);
    text += line;
  }
  write_text(dir / "lr_trace.csv", text);
}

} // namespace

TrainResult train(ModelVariant variant, std::span<const FeatureRecord> train_set,
                  std::span<const FeatureRecord> val_set, const TrainConfig& config,
                  const std::filesystem::path& run_dir) {
  config.validate();
  if (train_set.empty() || val_set.empty()) throw DataError("training and validation sets must be non-empty");

  ModelConfig model_config;
  model_config.dims = dims_of(train_set);
  model_config.hidden_size = config.hidden_size;
  model_config.mask_pads = config.mask_pads;
  if (!(dims_of(val_set) == model_config.dims)) {
    throw DataError("training and validation features have different dimensions");
  }

  const std::vector<ModelInput> train_inputs = prepare_inputs(variant, train_set, model_config);
  const std::vector<ModelInput> val_inputs = prepare_inputs(variant, val_set, model_config);
  const std::vector<int> train_labels = labels_of(train_set);
  const std::vector<int> val_labels = labels_of(val_set);
  const std::array<std::int64_t, 3> counts = class_counts(train_set);
  const std::array<double, 3> weights = class_weights(counts);

  TrainResult result;
  ModelParams params = init_params(variant, model_config, config.seed);
  ModelParams grad = params.zeros_like();
  AdamW optimizer(params, config);
  EarlyStopping stopper(config.patience);
  // Shuffling draws from its own stream so that init and order are independent.
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    ordered_json snapshot;
    snapshot["variant"] = std::string(variant_name(variant));
    snapshot["d_t"] = model_config.dims.text;
    snapshot["d_v"] = model_config.dims.visual;
    snapshot["d_f"] = model_config.dims.face;
    snapshot["train_samples"] = train_set.size();
    snapshot["val_samples"] = val_set.size();
    snapshot["train_class_counts"] = counts;
    snapshot["class_weights"] = weights;
    snapshot["train_fingerprint"] = dataset_fingerprint(train_set);
    snapshot["val_fingerprint"] = dataset_fingerprint(val_set);
    snapshot["config"] = to_json(config);
    write_text(run_dir / "config.json", snapshot.dump(2) + "\n");
  }

  auto metric_of = [&](const ConfusionMatrix& m) {
    return config.eval_metric == EvalMetric::MacroF1 ? macro_f1(m) : weighted_f1(m);
  };

  {
    const ConfusionMatrix m = confusion_on(params, val_inputs, val_labels);
    EpochRecord e;
    e.epoch = 0;
    e.val_macro_f1 = macro_f1(m);
    e.val_weighted_f1 = weighted_f1(m);
    e.lr_first = e.lr_last = triangular_lr(0, config);
    result.history.push_back(e);
  }
  result.best = params;

  std::vector<std::size_t> order(train_inputs.size());
  std::vector<const ModelInput*> batch_inputs;
  std::vector<int> batch_labels;
  std::int64_t iteration = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double loss_num = 0.0;
    double loss_den = 0.0;
    EpochRecord e;
    e.epoch = epoch;
    e.lr_first = triangular_lr(iteration, config);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      batch_inputs.clear();
      batch_labels.clear();
      double batch_weight = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        batch_inputs.push_back(&train_inputs[order[k]]);
        batch_labels.push_back(train_labels[order[k]]);
        batch_weight += weights[train_labels[order[k]]];
      }
      grad.for_each_tensor([](const std::string&, double* d, Eigen::Index r, Eigen::Index c) {
        std::fill(d, d + r * c, 0.0);
      });
      const double loss = loss_and_gradient(params, batch_inputs, batch_labels, weights, grad);
      if (!std::isfinite(loss)) {
        throw RuntimeFailure("training diverged: non-finite loss at iteration " + std::to_string(iteration) +
                             " (epoch " + std::to_string(epoch) + ")");
      }
      const double lr = triangular_lr(iteration, config);
      optimizer.step(params, grad, lr);
      result.lr_trace.push_back(lr);
      e.lr_last = lr;
      ++iteration;
      loss_num += loss * batch_weight;
      loss_den += batch_weight;
    }
    e.train_loss = loss_num / loss_den;
    e.iterations = iteration;

    const ConfusionMatrix m = confusion_on(params, val_inputs, val_labels);
    e.val_macro_f1 = macro_f1(m);
    e.val_weighted_f1 = weighted_f1(m);
    e.improved = stopper.update(epoch, metric_of(m));
    if (e.improved) result.best = params;
    result.history.push_back(e);
    result.last_epoch = epoch;

    if (!run_dir.empty()) {
      if (e.improved) save_checkpoint(run_dir / "best.ckpt", params, epoch);
      save_checkpoint(run_dir / "last.ckpt", params, epoch);
      write_history(run_dir, result);
      write_lr_trace(run_dir, result.lr_trace);
    }
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  result.last = std::move(params);
  result.best_epoch = stopper.best_epoch();
  return result;
}

} // namespace memesent
