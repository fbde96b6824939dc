#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "memesent/spatial.hpp"

namespace memesent {

enum class SentimentLabel : int { Negative = 0, Neutral = 1, Positive = 2 };

inline constexpr int kNumClasses = 3;

inline constexpr std::size_t kTextSlots = 18;
inline constexpr std::size_t kObjectSlots = 10;
inline constexpr std::size_t kFaceSlots = 5;

inline int class_index(SentimentLabel label) { return static_cast<int>(label); }
SentimentLabel label_from_index(int index);

/// Lowercase name ("negative", "neutral", "positive").
std::string_view to_string(SentimentLabel label);

/// Strict parse of the lowercase names; anything else throws DataError.
SentimentLabel parse_label(std::string_view text);

struct EncoderDims {
  int text = 512;
  int visual = 512;
  int face = 128;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// Backend-defined fill values for unused text and object slots.
/// Face slots are always padded with zeros.
struct PadVectors {
  Vector text;
  Vector object;
};

/// One fixed-capacity position of a FeatureRecord. `tag` carries the cluster
/// text or the object class label for real slots; it is empty for pads.
struct Slot {
  Vector embedding;
  SpatialEncoding spatial;
  bool is_pad = true;
  std::string tag;
  double confidence = 0.0;
};

/// A meme's padded feature bundle. Real slots come first.
struct FeatureRecord {
  std::string meme_id;
  SentimentLabel label = SentimentLabel::Neutral;
  Vector image_embedding;
  Vector text_embedding;
  std::array<Slot, kTextSlots> text_slots;
  std::array<Slot, kObjectSlots> object_slots;
  std::array<Slot, kFaceSlots> face_slots;

  std::size_t real_text_count() const;
  std::size_t real_object_count() const;
  std::size_t real_face_count() const;
};

struct FeatureSet {
  EncoderDims dims;
  PadVectors pads;
  std::vector<FeatureRecord> records;
};

/// Fills every slot from `first_pad` onwards with the given pad embedding and
/// a zero spatial encoding.
template <std::size_t N>
void pad_slots(std::array<Slot, N>& slots, std::size_t first_pad, const Vector& pad) {
  for (std::size_t s = first_pad; s < N; ++s) {
    slots[s] = Slot{pad, SpatialEncoding::zero(), true, {}, 0.0};
  }
}

/// Serializes only the real slots, in slot order.
nlohmann::ordered_json feature_record_to_json(const FeatureRecord& record);

/// Parses one feature-manifest line and pads it. Throws DataError on schema
/// or dimension violations.
FeatureRecord feature_record_from_json(const nlohmann::json& j, const EncoderDims& dims,
                                       const PadVectors& pads);

/// `<stem>.pads.json` next to a feature manifest; holds dims and pad vectors.
std::filesystem::path pads_sidecar_path(const std::filesystem::path& manifest);

void write_feature_manifest(const std::filesystem::path& path, const FeatureSet& set);
FeatureSet load_feature_manifest(const std::filesystem::path& path);

/// Checks slot counts, real-before-pad ordering, pad contents and dims.
/// Throws DataError describing the first violation.
void validate_feature_record(const FeatureRecord& record, const EncoderDims& dims,
                             const PadVectors& pads);

} // namespace memesent
