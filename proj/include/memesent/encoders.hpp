#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memesent/features.hpp"
#include "memesent/spatial.hpp"

namespace memesent {

struct TextCluster {
  std::string text;
  BBox box;
  double confidence = 1.0;
};

struct VisualObject {
  std::string class_label;
  BBox box;
  double confidence = 1.0;
};

struct Face {
  BBox box;
  Vector embedding;
  double confidence = 1.0;
};

struct FrameSize {
  double width = 1.0;
  double height = 1.0;
};

/// Raw image content plus the meme id it belongs to. Backends that never
/// look at pixels key on `key`.
struct Image {
  std::string key;
  std::vector<std::uint8_t> bytes;
};

/// Reads the file if it exists; a missing file yields empty bytes, which
/// pixel-reading backends reject as undecodable.
Image load_image(std::string key, const std::filesystem::path& path);

/// The canonical blank image whose encoding pads object slots:
/// a 224x224 all-white binary PPM.
const std::vector<std::uint8_t>& blank_image_bytes();

/// Deterministic pseudo-embedding: FNV-1a 64 of `key` seeds an mt19937_64,
/// `dim` Box-Muller normals are drawn and L2-normalized.
Vector stub_vector(std::string_view key, int dim);

/// Detection and representation provider. Implementations must be pure
/// functions of their inputs and safe for concurrent const use.
class EncoderBackend {
public:
  virtual ~EncoderBackend() = default;

  virtual std::string name() const = 0;

  const EncoderDims& dims() const { return dims_; }

  virtual Vector encode_text(std::string_view text) const = 0;
  virtual Vector encode_image(const Image& image) const = 0;
  virtual Vector encode_region(const Image& image, const VisualObject& object) const = 0;

  /// Global text representation of a meme. Defaults to encode_text.
  virtual Vector encode_meme_text(const Image& image, std::string_view text) const;

  virtual FrameSize frame_size(const Image& image) const = 0;
  virtual std::vector<TextCluster> detect_text_clusters(const Image& image) const = 0;
  virtual std::vector<VisualObject> detect_objects(const Image& image) const = 0;
  virtual std::vector<Face> detect_faces(const Image& image) const = 0;

  /// encode_text("").
  const Vector& text_pad() const { return pads_.text; }
  /// encode_image of the blank image.
  const Vector& object_pad() const { return pads_.object; }
  const PadVectors& pads() const { return pads_; }

protected:
  explicit EncoderBackend(EncoderDims dims);

  /// Stores the pad vectors once; called by derived constructors.
  void set_pads(PadVectors pads);

  /// Throws DataError unless v has exactly `dim` entries.
  static void check_dim(const Vector& v, int dim, std::string_view what);

private:
  EncoderDims dims_;
  PadVectors pads_;
};

struct FixtureFace {
  BBox box;
  double confidence = 1.0;
  /// Optional identity key; faces with equal identity share an embedding.
  std::string identity;
};

/// Scripted detections for one meme. Boxes are in pixels of a
/// width x height frame.
struct StubFixture {
  std::string meme_id;
  FrameSize frame;
  std::vector<TextCluster> clusters;
  std::vector<VisualObject> objects;
  std::vector<FixtureFace> faces;
};

using FixtureMap = std::map<std::string, StubFixture>;

FixtureMap load_stub_fixtures(const std::filesystem::path& path);
void write_stub_fixtures(const std::filesystem::path& path, const std::vector<StubFixture>& fixtures);
nlohmann::ordered_json fixture_to_json(const StubFixture& fixture);
StubFixture fixture_from_json(const nlohmann::json& j);

/// Offline backend. Embeddings are stub_vector of a prefixed key:
///   text    "text:"   + string
///   image   "image:"  + raw bytes
///   region  "object:" + class label
///   face    "face:"   + identity, or meme_id + "#" + detection index
/// Detections are returned verbatim from the fixture map.
class StubBackend final : public EncoderBackend {
public:
  StubBackend(EncoderDims dims, FixtureMap fixtures);

  std::string name() const override { return "stub"; }

  Vector encode_text(std::string_view text) const override;
  Vector encode_image(const Image& image) const override;
  Vector encode_region(const Image& image, const VisualObject& object) const override;
  FrameSize frame_size(const Image& image) const override;
  std::vector<TextCluster> detect_text_clusters(const Image& image) const override;
  std::vector<VisualObject> detect_objects(const Image& image) const override;
  std::vector<Face> detect_faces(const Image& image) const override;

private:
  const StubFixture& fixture(const Image& image) const;

  FixtureMap fixtures_;
};

/// Serves detections and embeddings from an existing feature manifest.
/// Boxes come back in the unit frame, so normalization is the identity.
class PrecomputedBackend final : public EncoderBackend {
public:
  explicit PrecomputedBackend(FeatureSet features);
  static std::unique_ptr<PrecomputedBackend> from_file(const std::filesystem::path& path);

  std::string name() const override { return "precomputed"; }

  Vector encode_text(std::string_view text) const override;
  Vector encode_image(const Image& image) const override;
  Vector encode_region(const Image& image, const VisualObject& object) const override;
  Vector encode_meme_text(const Image& image, std::string_view text) const override;
  FrameSize frame_size(const Image& image) const override;
  std::vector<TextCluster> detect_text_clusters(const Image& image) const override;
  std::vector<VisualObject> detect_objects(const Image& image) const override;
  std::vector<Face> detect_faces(const Image& image) const override;

  const std::vector<std::string>& meme_ids() const { return order_; }

private:
  const FeatureRecord& record(const Image& image) const;

  std::vector<std::string> order_;
  std::unordered_map<std::string, FeatureRecord> records_;
  std::unordered_map<std::string, Vector> text_index_;
};

} // namespace memesent
