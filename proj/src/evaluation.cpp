#include "memesent/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include "memesent/error.hpp"
#include "memesent/rng.hpp"

namespace memesent {

using nlohmann::json;
using nlohmann::ordered_json;

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw DataError("true and predicted label lists differ in length");
  }
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumClasses || predicted[i] < 0 || predicted[i] >= kNumClasses) {
      throw DataError("label out of range at position " + std::to_string(i));
    }
    ++m[truth[i]][predicted[i]];
  }
  return m;
}

std::array<ClassMetrics, kNumClasses> per_class_metrics(const ConfusionMatrix& m) {
  std::array<ClassMetrics, kNumClasses> out{};
  for (int c = 0; c < kNumClasses; ++c) {
    const std::int64_t tp = m[c][c];
    std::int64_t predicted = 0;
    std::int64_t actual = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      predicted += m[k][c];
      actual += m[c][k];
    }
    ClassMetrics& cm = out[c];
    cm.support = actual;
    cm.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    cm.recall = actual > 0 ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double denom = cm.precision + cm.recall;
    cm.f1 = denom > 0.0 ? 2.0 * cm.precision * cm.recall / denom : 0.0;
  }
  return out;
}

double macro_f1(const ConfusionMatrix& m) {
  const auto pc = per_class_metrics(m);
  double sum = 0.0;
  for (const auto& c : pc) sum += c.f1;
  return sum / kNumClasses;
}

double weighted_f1(const ConfusionMatrix& m) {
  const auto pc = per_class_metrics(m);
  double num = 0.0;
  std::int64_t total = 0;
  for (const auto& c : pc) {
    num += static_cast<double>(c.support) * c.f1;
    total += c.support;
  }
  return total > 0 ? num / static_cast<double>(total) : 0.0;
}

EvalReport make_report(const ConfusionMatrix& confusion) {
  EvalReport r;
  r.confusion = confusion;
  for (const auto& row : confusion) {
    for (auto v : row) r.sample_count += v;
  }
  r.per_class = per_class_metrics(confusion);
  r.macro_f1 = macro_f1(confusion);
  r.weighted_f1 = weighted_f1(confusion);
  return r;
}

std::string dataset_fingerprint(std::span<const FeatureRecord> records) {
  std::string joined;
  for (const auto& r : records) {
    joined += r.meme_id;
    joined += '\t';
    joined += to_string(r.label);
    joined += '\n';
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(joined)));
  return hex;
}

EvalReport evaluate(const ModelParams& params, std::span<const FeatureRecord> records) {
  const Matrix log_probs = forward(params.variant, records, params);
  std::vector<int> truth;
  std::vector<int> predicted;
  truth.reserve(records.size());
  predicted.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    truth.push_back(class_index(records[i].label));
    predicted.push_back(predict_class(log_probs.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  EvalReport r = make_report(confusion_matrix(truth, predicted));
  r.variant = std::string(variant_name(params.variant));
  r.dataset_fingerprint = dataset_fingerprint(records);
  return r;
}

ordered_json report_to_json(const EvalReport& r) {
  ordered_json j;
  j["variant"] = r.variant;
  j["dataset_fingerprint"] = r.dataset_fingerprint;
  j["sample_count"] = r.sample_count;
  ordered_json conf = ordered_json::array();
  for (const auto& row : r.confusion) conf.push_back(ordered_json(row));
  j["confusion"] = std::move(conf);
  ordered_json per_class;
  for (int c = 0; c < kNumClasses; ++c) {
    ordered_json m;
    m["precision"] = r.per_class[c].precision;
    m["recall"] = r.per_class[c].recall;
    m["f1"] = r.per_class[c].f1;
    m["support"] = r.per_class[c].support;
    per_class[std::string(to_string(label_from_index(c)))] = std::move(m);
  }
  j["per_class"] = std::move(per_class);
  j["macro_f1"] = r.macro_f1;
  j["weighted_f1"] = r.weighted_f1;
  return j;
}

EvalReport report_from_json(const json& j) {
  try {
    ConfusionMatrix conf{};
    const auto& rows = j.at("confusion");
    if (!rows.is_array() || rows.size() != kNumClasses) throw DataError("confusion must be 3x3");
    for (int r = 0; r < kNumClasses; ++r) {
      if (!rows[r].is_array() || rows[r].size() != kNumClasses) throw DataError("confusion must be 3x3");
      for (int c = 0; c < kNumClasses; ++c) conf[r][c] = rows[r][c].get<std::int64_t>();
    }
    EvalReport rep = make_report(conf);
    rep.variant = j.value("variant", std::string{});
    rep.dataset_fingerprint = j.value("dataset_fingerprint", std::string{});
    if (j.at("sample_count").get<std::int64_t>() != rep.sample_count) {
      throw DataError("report sample_count disagrees with its confusion matrix");
    }
    return rep;
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

std::string direction_marker(double dw, double dm) {
  const bool up = dw > 0.0 || dm > 0.0;
  const bool down = dw < 0.0 || dm < 0.0;
  if (up && down) return "↑↓";
  if (up) return "↑";
  if (down) return "↓";
  return "=";
}

Comparison compare(const EvalReport& a, const EvalReport& b) {
  if (a.sample_count != b.sample_count) {
    throw DataError("reports cover different sample counts (" + std::to_string(a.sample_count) +
                    " vs " + std::to_string(b.sample_count) + ")");
  }
  if (!a.dataset_fingerprint.empty() && !b.dataset_fingerprint.empty() &&
      a.dataset_fingerprint != b.dataset_fingerprint) {
    throw DataError("reports cover different test sets");
  }
  Comparison c;
  c.name_a = a.variant.empty() ? "a" : a.variant;
  c.name_b = b.variant.empty() ? "b" : b.variant;
  c.sample_count = a.sample_count;
  c.rows.push_back({"F1-W", a.weighted_f1, b.weighted_f1, a.weighted_f1 - b.weighted_f1});
  c.rows.push_back({"F1-M", a.macro_f1, b.macro_f1, a.macro_f1 - b.macro_f1});
  c.marker = direction_marker(c.rows[0].delta, c.rows[1].delta);
  return c;
}

ordered_json comparison_to_json(const Comparison& c) {
  ordered_json j;
  j["model"] = c.name_a;
  j["comparison"] = c.name_b;
  j["sample_count"] = c.sample_count;
  ordered_json metrics = ordered_json::array();
  for (const auto& r : c.rows) {
    metrics.push_back({{"metric", r.metric}, {"a", r.a}, {"b", r.b}, {"delta", r.delta}});
  }
  j["metrics"] = std::move(metrics);
  j["marker"] = c.marker;
  return j;
}

std::string comparison_to_text(const Comparison& c) {
  const std::string vs = "vs. " + c.name_b;
  std::size_t w0 = std::max<std::size_t>({5, c.name_a.size(), c.name_b.size()});
  std::size_t w1 = std::max<std::size_t>(10, vs.size());
  char line[512];
  std::ostringstream out;
  std::snprintf(line, sizeof line, "%-*s  %-*s  %7s  %7s  %s\n", static_cast<int>(w0), "Model",
                static_cast<int>(w1), "Comparison", "F1-W", "F1-M", "Rel.");
  out << line;
  std::snprintf(line, sizeof line, "%-*s  %-*s  %7.3f  %7.3f  %s\n", static_cast<int>(w0),
                c.name_b.c_str(), static_cast<int>(w1), "-", c.rows[0].b, c.rows[1].b, "-");
  out << line;
  std::snprintf(line, sizeof line, "%-*s  %-*s  %7.3f  %7.3f  %s\n", static_cast<int>(w0),
                c.name_a.c_str(), static_cast<int>(w1), vs.c_str(), c.rows[0].a, c.rows[1].a,
                c.marker.c_str());
  out << line;
  std::snprintf(line, sizeof line, "%-*s  %-*s  %+7.3f  %+7.3f\n", static_cast<int>(w0), "delta",
                static_cast<int>(w1), "", c.rows[0].delta, c.rows[1].delta);
  out << line;
  return out.str();
}

} // namespace memesent
