#include "memesent/encoders.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "memesent/error.hpp"
#include "memesent/rng.hpp"

namespace memesent {

using nlohmann::json;
using nlohmann::ordered_json;

Image load_image(std::string key, const std::filesystem::path& path) {
  Image img{std::move(key), {}};
  std::ifstream in(path, std::ios::binary);
  if (in) {
    img.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return img;
}

const std::vector<std::uint8_t>& blank_image_bytes() {
  static const std::vector<std::uint8_t> bytes = [] {
    const std::string header = "P6\n224 224\n255\n";
    std::vector<std::uint8_t> b(header.begin(), header.end());
    b.insert(b.end(), std::size_t{224} * 224 * 3, std::uint8_t{255});
    return b;
  }();
  return bytes;
}

Vector stub_vector(std::string_view key, int dim) {
  if (dim < 1) throw UsageError("stub_vector dimension must be at least 1");
  Rng rng(fnv1a64(key));
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  const double norm = v.norm();
  // Box-Muller never returns an exactly-zero vector in practice; keep the
  // contract anyway.
  if (norm > 0.0) v /= norm;
  return v;
}

Vector EncoderBackend::encode_meme_text(const Image&, std::string_view text) const {
  return encode_text(text);
}

EncoderBackend::EncoderBackend(EncoderDims dims) : dims_(dims) {
  if (dims.text < 1 || dims.visual < 1 || dims.face < 1) {
    throw UsageError("encoder dimensions must be positive");
  }
}

void EncoderBackend::set_pads(PadVectors pads) {
  check_dim(pads.text, dims_.text, "text pad");
  check_dim(pads.object, dims_.visual, "object pad");
  pads_ = std::move(pads);
}

void EncoderBackend::check_dim(const Vector& v, int dim, std::string_view what) {
  if (v.size() != dim) {
    throw DataError(std::string(what) + " has dimension " + std::to_string(v.size()) +
                    ", expected " + std::to_string(dim));
  }
}

// ---------------------------------------------------------------- fixtures

namespace {

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of 4 numbers");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

ordered_json bbox_to_json(const BBox& b) {
  return ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

} // namespace

StubFixture fixture_from_json(const json& j) {
  StubFixture f;
  f.meme_id = j.at("meme_id").get<std::string>();
  f.frame.width = j.value("width", 1.0);
  f.frame.height = j.value("height", 1.0);
  for (const auto& c : j.value("text_clusters", json::array())) {
    TextCluster tc{c.at("text").get<std::string>(), bbox_from_json(c.at("box")),
                   c.value("confidence", 1.0)};
    if (tc.text.empty()) throw DataError("fixture " + f.meme_id + " has an empty text cluster");
    f.clusters.push_back(std::move(tc));
  }
  for (const auto& o : j.value("objects", json::array())) {
    f.objects.push_back(VisualObject{o.at("label").get<std::string>(),
                                     bbox_from_json(o.at("box")), o.value("confidence", 1.0)});
  }
  for (const auto& fc : j.value("faces", json::array())) {
    f.faces.push_back(FixtureFace{bbox_from_json(fc.at("box")), fc.value("confidence", 1.0),
                                  fc.value("identity", std::string{})});
  }
  return f;
}

ordered_json fixture_to_json(const StubFixture& f) {
  ordered_json j;
  j["meme_id"] = f.meme_id;
  j["width"] = f.frame.width;
  j["height"] = f.frame.height;
  ordered_json clusters = ordered_json::array();
  for (const auto& c : f.clusters) {
    ordered_json item;
    item["text"] = c.text;
    item["box"] = bbox_to_json(c.box);
    item["confidence"] = c.confidence;
    clusters.push_back(std::move(item));
  }
  j["text_clusters"] = std::move(clusters);
  ordered_json objects = ordered_json::array();
  for (const auto& o : f.objects) {
    ordered_json item;
    item["label"] = o.class_label;
    item["confidence"] = o.confidence;
    item["box"] = bbox_to_json(o.box);
    objects.push_back(std::move(item));
  }
  j["objects"] = std::move(objects);
  ordered_json faces = ordered_json::array();
  for (const auto& fc : f.faces) {
    ordered_json item;
    item["confidence"] = fc.confidence;
    item["box"] = bbox_to_json(fc.box);
    if (!fc.identity.empty()) item["identity"] = fc.identity;
    faces.push_back(std::move(item));
  }
  j["faces"] = std::move(faces);
  return j;
}

FixtureMap load_stub_fixtures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fixture file " + path.string());
  FixtureMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      StubFixture f = fixture_from_json(json::parse(line));
      const std::string id = f.meme_id;
      if (!out.emplace(id, std::move(f)).second) {
        throw DataError("duplicate fixture for meme_id " + id);
      }
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_stub_fixtures(const std::filesystem::path& path, const std::vector<StubFixture>& fixtures) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& f : fixtures) out << fixture_to_json(f).dump() << '\n';
}

// ---------------------------------------------------------------- stub

StubBackend::StubBackend(EncoderDims dims, FixtureMap fixtures)
    : EncoderBackend(dims), fixtures_(std::move(fixtures)) {
  Image blank{"", blank_image_bytes()};
  set_pads(PadVectors{encode_text(""), encode_image(blank)});
}

Vector StubBackend::encode_text(std::string_view text) const {
  std::string key = "text:";
  key.append(text);
  return stub_vector(key, dims().text);
}

Vector StubBackend::encode_image(const Image& image) const {
  if (image.bytes.empty()) throw DataError("undecodable image for meme_id " + image.key);
  std::string key = "image:";
  key.append(image.bytes.begin(), image.bytes.end());
  return stub_vector(key, dims().visual);
}

Vector StubBackend::encode_region(const Image&, const VisualObject& object) const {
  return stub_vector("object:" + object.class_label, dims().visual);
}

const StubFixture& StubBackend::fixture(const Image& image) const {
  const auto it = fixtures_.find(image.key);
  if (it == fixtures_.end()) throw DataError("no stub fixture for meme_id " + image.key);
  return it->second;
}

FrameSize StubBackend::frame_size(const Image& image) const { return fixture(image).frame; }

std::vector<TextCluster> StubBackend::detect_text_clusters(const Image& image) const {
  return fixture(image).clusters;
}

std::vector<VisualObject> StubBackend::detect_objects(const Image& image) const {
  return fixture(image).objects;
}

std::vector<Face> StubBackend::detect_faces(const Image& image) const {
  const StubFixture& f = fixture(image);
  std::vector<Face> faces;
  faces.reserve(f.faces.size());
  for (std::size_t k = 0; k < f.faces.size(); ++k) {
    const std::string key = f.faces[k].identity.empty()
                                ? "face:" + f.meme_id + "#" + std::to_string(k)
                                : "face:" + f.faces[k].identity;
    faces.push_back(Face{f.faces[k].box, stub_vector(key, dims().face), f.faces[k].confidence});
  }
  return faces;
}

// ---------------------------------------------------------------- precomputed

namespace {

BBox unit_box(const SpatialEncoding& e) { return BBox{e.x_min(), e.y_min(), e.x_max(), e.y_max()}; }

} // namespace

PrecomputedBackend::PrecomputedBackend(FeatureSet features) : EncoderBackend(features.dims) {
  set_pads(features.pads);
  for (auto& r : features.records) {
    for (const auto& s : r.text_slots) {
      if (s.is_pad) break;
      const auto [it, inserted] = text_index_.emplace(s.tag, s.embedding);
      if (!inserted && it->second != s.embedding) {
        throw DataError("precomputed features disagree on the embedding of text \"" + s.tag + "\"");
      }
    }
    order_.push_back(r.meme_id);
    const std::string id = r.meme_id;
    if (!records_.emplace(id, std::move(r)).second) {
      throw DataError("duplicate meme_id in precomputed features: " + id);
    }
  }
}

std::unique_ptr<PrecomputedBackend> PrecomputedBackend::from_file(const std::filesystem::path& path) {
  return std::make_unique<PrecomputedBackend>(load_feature_manifest(path));
}

const FeatureRecord& PrecomputedBackend::record(const Image& image) const {
  const auto it = records_.find(image.key);
  if (it == records_.end()) throw DataError("no precomputed features for meme_id " + image.key);
  return it->second;
}

Vector PrecomputedBackend::encode_text(std::string_view text) const {
  if (text.empty()) return text_pad();
  const auto it = text_index_.find(std::string(text));
  if (it == text_index_.end()) {
    throw DataError("no precomputed embedding for text \"" + std::string(text) + "\"");
  }
  return it->second;
}

Vector PrecomputedBackend::encode_image(const Image& image) const {
  if (image.bytes == blank_image_bytes()) return object_pad();
  return record(image).image_embedding;
}

Vector PrecomputedBackend::encode_region(const Image& image, const VisualObject& object) const {
  for (const auto& s : record(image).object_slots) {
    if (s.is_pad) break;
    if (s.tag == object.class_label && unit_box(s.spatial) == object.box) return s.embedding;
  }
  throw DataError("no precomputed region embedding for object \"" + object.class_label +
                  "\" of meme_id " + image.key);
}

Vector PrecomputedBackend::encode_meme_text(const Image& image, std::string_view) const {
  return record(image).text_embedding;
}

FrameSize PrecomputedBackend::frame_size(const Image& image) const {
  record(image);
  return FrameSize{1.0, 1.0};
}

std::vector<TextCluster> PrecomputedBackend::detect_text_clusters(const Image& image) const {
  std::vector<TextCluster> out;
  for (const auto& s : record(image).text_slots) {
    if (s.is_pad) break;
    out.push_back(TextCluster{s.tag, unit_box(s.spatial), s.confidence});
  }
  return out;
}

std::vector<VisualObject> PrecomputedBackend::detect_objects(const Image& image) const {
  std::vector<VisualObject> out;
  for (const auto& s : record(image).object_slots) {
    if (s.is_pad) break;
    out.push_back(VisualObject{s.tag, unit_box(s.spatial), s.confidence});
  }
  return out;
}

std::vector<Face> PrecomputedBackend::detect_faces(const Image& image) const {
  std::vector<Face> out;
  for (const auto& s : record(image).face_slots) {
    if (s.is_pad) break;
    out.push_back(Face{unit_box(s.spatial), s.embedding, s.confidence});
  }
  return out;
}

} // namespace memesent
