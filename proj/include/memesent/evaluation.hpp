#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memesent/features.hpp"
#include "memesent/model.hpp"

namespace memesent {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

/// Undefined ratios (zero denominators) count as 0.
std::array<ClassMetrics, kNumClasses> per_class_metrics(const ConfusionMatrix& confusion);
double macro_f1(const ConfusionMatrix& confusion);
double weighted_f1(const ConfusionMatrix& confusion);

struct EvalReport {
  std::string variant;
  /// FNV-1a 64 over the ordered (meme_id, label) pairs of the evaluated set.
  std::string dataset_fingerprint;
  std::int64_t sample_count = 0;
  ConfusionMatrix confusion{};
  std::array<ClassMetrics, kNumClasses> per_class{};
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
};

EvalReport make_report(const ConfusionMatrix& confusion);

std::string dataset_fingerprint(std::span<const FeatureRecord> records);

/// Forward pass, lowest-index argmax, report.
EvalReport evaluate(const ModelParams& params, std::span<const FeatureRecord> records);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

struct MetricDelta {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0; // a - b
};

/// Relative performance of report a against report b.
struct Comparison {
  std::string name_a;
  std::string name_b;
  std::int64_t sample_count = 0;
  std::vector<MetricDelta> rows; // F1-W, then F1-M
  /// "↑" both up, "↓" both down, "↑↓" disagreeing signs, "=" no change.
  std::string marker;
};

/// Throws DataError when the reports cover different test sets.
Comparison compare(const EvalReport& a, const EvalReport& b);

std::string direction_marker(double delta_weighted, double delta_macro);

nlohmann::ordered_json comparison_to_json(const Comparison& c);
std::string comparison_to_text(const Comparison& c);

} // namespace memesent
