#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memesent/encoders.hpp"
#include "memesent/ingestion.hpp"

namespace memesent {

/// Planted-rule dataset settings. The label depends only on where the
/// primary text cluster sits relative to the anchor object.
struct SynthConfig {
  int n_samples = 300;
  std::uint64_t seed = 7;
  std::array<double, 3> class_balance{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  int max_extra_clusters = 3;
  int max_extra_objects = 2;
  int max_faces = 1;
  double image_size = 1000.0;
  /// Optional (train, val, test) sizes; samples are then tagged with a split.
  std::optional<std::array<int, 3>> split_counts;

  void validate() const;
};

inline constexpr std::array<const char*, 8> kPrimaryTokens{
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"};
inline constexpr std::array<const char*, 8> kDistractorTokens{
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa"};
inline constexpr std::array<const char*, 2> kAnchorClasses{"person", "dog"};
inline constexpr std::array<const char*, 4> kDistractorClasses{"car", "tree", "bottle", "chair"};

/// Positive when (cx, cy) is inside the anchor (edges included), Negative
/// when cy is strictly above the anchor's top edge, Neutral otherwise.
SentimentLabel planted_label(const BBox& anchor, double cx, double cy);

/// Exact per-class sample counts for n samples (largest remainder).
std::array<std::int64_t, 3> class_quotas(int n, const std::array<double, 3>& balance);

struct SynthDataset {
  std::vector<ManifestRecord> manifest;
  std::vector<StubFixture> fixtures;
};

/// Throws DataError when the balance cannot be met within 10^6 draws.
SynthDataset generate(const SynthConfig& config);

struct SynthFiles {
  std::filesystem::path manifest;
  std::filesystem::path fixtures;
  std::filesystem::path features;
  /// Per-split feature manifests, present when split_counts was set.
  std::optional<std::array<std::filesystem::path, 3>> split_features;
};

/// Writes manifest.jsonl, fixtures.jsonl, placeholder images/ and the stub
/// extracted features.jsonl (plus features.{train,val,test}.jsonl when the
/// dataset carries split tags).
SynthFiles write_synth_dataset(const std::filesystem::path& out_dir, const SynthDataset& dataset,
                               const EncoderDims& dims);

} // namespace memesent
