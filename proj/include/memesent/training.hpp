#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memesent/features.hpp"
#include "memesent/model.hpp"

namespace memesent {

enum class EvalMetric { MacroF1, WeightedF1 };

/// Training hyperparameters. Defaults reproduce the published recipe;
/// desk-scale runs override batch_size / max_epochs.
struct TrainConfig {
  double lr_base = 1e-4;
  double lr_max = 1e-3;
  int lr_step_size = 52;
  int batch_size = 512;
  int max_epochs = 100;
  double weight_decay = 0.5;
  double beta1 = 0.1;
  double beta2 = 0.25;
  double eps = 1e-8;
  int patience = 10;
  std::uint64_t seed = 0;
  EvalMetric eval_metric = EvalMetric::MacroF1;
  // Model and data options carried in the same file.
  int hidden_size = 256;
  bool mask_pads = false;
  double train_fraction = 0.85;

  /// Throws UsageError on violated invariants.
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

/// w_c = N / (3 * N_c). Throws DataError on an empty class.
std::array<double, 3> class_weights(const std::array<std::int64_t, 3>& counts);
std::array<std::int64_t, 3> class_counts(std::span<const FeatureRecord> records);

/// Triangular cyclical schedule between lr_base and lr_max with a
/// half-period of lr_step_size optimizer steps.
double triangular_lr(std::int64_t iteration, const TrainConfig& config);

/// Class-weighted mean negative log-likelihood.
double nll_loss(const Matrix& log_probs, std::span<const int> labels, const std::array<double, 3>& weights);

/// Tracks the best validation metric; an epoch improves only when it beats
/// the best strictly.
class EarlyStopping {
public:
  explicit EarlyStopping(int patience);

  /// Returns true when `metric` is a new best.
  bool update(int epoch, double metric);
  bool should_stop() const { return epochs_without_improvement_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }

private:
  int patience_;
  int best_epoch_ = -1;
  double best_metric_ = 0.0;
  int epochs_without_improvement_ = 0;
};

/// Decoupled weight decay Adam with bias correction.
class AdamW {
public:
  AdamW(const ModelParams& shape, const TrainConfig& config);

  void step(ModelParams& params, const ModelParams& grad, double lr);
  std::int64_t steps() const { return steps_; }

private:
  ModelParams m_;
  ModelParams v_;
  double beta1_;
  double beta2_;
  double eps_;
  double weight_decay_;
  std::int64_t steps_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  /// Empty for epoch 0, the untrained model.
  std::optional<double> train_loss;
  double val_macro_f1 = 0.0;
  double val_weighted_f1 = 0.0;
  double lr_first = 0.0;
  double lr_last = 0.0;
  std::int64_t iterations = 0; // optimizer steps taken so far
  bool improved = false;
};

struct TrainResult {
  ModelParams best;
  ModelParams last;
  int best_epoch = 0;
  int last_epoch = 0;
  bool early_stopped = false;
  std::vector<EpochRecord> history;
  std::vector<double> lr_trace; // one entry per optimizer step
};

/// Full training run. When `run_dir` is non-empty the run directory is
/// written: config.json, history.jsonl, best.ckpt, last.ckpt, lr_trace.csv.
/// Throws RuntimeFailure on a non-finite loss.
TrainResult train(ModelVariant variant, std::span<const FeatureRecord> train_set,
                  std::span<const FeatureRecord> val_set, const TrainConfig& config,
                  const std::filesystem::path& run_dir = {});

nlohmann::ordered_json to_json(const EpochRecord& record);

} // namespace memesent
