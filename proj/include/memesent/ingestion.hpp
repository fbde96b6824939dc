#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memesent/encoders.hpp"
#include "memesent/error.hpp"
#include "memesent/features.hpp"
#include "memesent/rng.hpp"

namespace memesent {

enum class Split { Train, Val, Test, Unassigned };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestRecord {
  std::string meme_id;
  std::filesystem::path image_path;
  std::optional<std::string> curated_text;
  SentimentLabel label = SentimentLabel::Neutral;
  Split split = Split::Unassigned;
};

/// Reads a JSONL dataset manifest. Errors name the offending line.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

struct DetectionCounts {
  std::size_t objects = 0;
  std::size_t clusters = 0;
};

/// Keeps the records with at least one object and one text cluster.
std::vector<ManifestRecord> filter_samples(const std::vector<ManifestRecord>& records,
                                           const std::map<std::string, DetectionCounts>& detections);

/// Per class c, floor(train_fraction * N_c) records go to train (chosen by a
/// seeded shuffle within the class) and the rest to validation. Both outputs
/// keep the input order. Works for any record type with a `label` member.
template <typename Record>
std::pair<std::vector<Record>, std::vector<Record>>
stratified_split(const std::vector<Record>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train_fraction must lie strictly between 0 and 1");
  }
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_class[class_index(records[i].label)].push_back(i);
  }
  Rng rng(seed);
  std::vector<bool> to_train(records.size(), false);
  for (auto& members : by_class) {
    const double exact = train_fraction * static_cast<double>(members.size());
    // The epsilon absorbs representation error in products such as 0.85 * 60.
    const auto n_train = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rng.shuffle(members);
    for (std::size_t k = 0; k < n_train; ++k) to_train[members[k]] = true;
  }
  std::pair<std::vector<Record>, std::vector<Record>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (to_train[i] ? out.first : out.second).push_back(records[i]);
  }
  return out;
}

/// Cluster texts joined by single spaces.
std::string concat_clusters(std::span<const TextCluster> clusters);

/// Stable sort by (y_min, x_min).
void sort_reading_order(std::vector<TextCluster>& clusters);
/// Stable sort by confidence descending, ties by box area descending.
void sort_by_confidence(std::vector<VisualObject>& objects);
void sort_by_confidence(std::vector<Face>& faces);

enum class TextSource { Ocr, Curated };

/// Detector output for one meme, before ordering, truncation and padding.
struct ExtractionResult {
  std::string meme_id;
  SentimentLabel label = SentimentLabel::Neutral;
  Image image;
  FrameSize frame;
  std::vector<TextCluster> clusters;
  std::vector<VisualObject> objects;
  std::vector<Face> faces;
  /// When set, encodes the global text instead of the concatenated clusters.
  std::optional<std::string> text_override;

  DetectionCounts counts() const { return {objects.size(), clusters.size()}; }
};

/// Runs the backend detectors on one manifest record. Relative image paths
/// resolve against `image_root`.
ExtractionResult extract(const ManifestRecord& record, const EncoderBackend& backend,
                         TextSource text_source, const std::filesystem::path& image_root = {});

/// Orders, truncates to the 18/10/5 caps, embeds and pads one meme.
FeatureRecord build_feature_record(const ExtractionResult& extraction, const EncoderBackend& backend);

/// extract -> filter_samples -> build_feature_record over a whole manifest.
FeatureSet extract_features(const std::vector<ManifestRecord>& records, const EncoderBackend& backend,
                            TextSource text_source, const std::filesystem::path& image_root = {});

} // namespace memesent
