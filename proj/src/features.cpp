#include "memesent/features.hpp"

#include <fstream>
#include <sstream>

#include "memesent/error.hpp"

namespace memesent {

using nlohmann::json;
using nlohmann::ordered_json;

SentimentLabel label_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw DataError("label index out of range: " + std::to_string(index));
  }
  return static_cast<SentimentLabel>(index);
}

std::string_view to_string(SentimentLabel label) {
  switch (label) {
  case SentimentLabel::Negative: return "negative";
  case SentimentLabel::Neutral: return "neutral";
  case SentimentLabel::Positive: return "positive";
  }
  return "unknown";
}

SentimentLabel parse_label(std::string_view text) {
  if (text == "negative") return SentimentLabel::Negative;
  if (text == "neutral") return SentimentLabel::Neutral;
  if (text == "positive") return SentimentLabel::Positive;
  throw DataError("unknown label \"" + std::string(text) + "\"");
}

namespace {

template <std::size_t N>
std::size_t count_real(const std::array<Slot, N>& slots) {
  std::size_t n = 0;
  for (const auto& s : slots) n += s.is_pad ? 0 : 1;
  return n;
}

ordered_json vector_to_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j, int expected_dim, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " is not an array");
  if (static_cast<int>(j.size()) != expected_dim) {
    throw DataError(std::string(what) + " has dimension " + std::to_string(j.size()) +
                    ", expected " + std::to_string(expected_dim));
  }
  Vector v(expected_dim);
  for (int i = 0; i < expected_dim; ++i) {
    if (!j[i].is_number()) throw DataError(std::string(what) + " holds a non-number");
    v[i] = j[i].get<double>();
  }
  return v;
}

ordered_json box_to_json(const SpatialEncoding& enc) {
  return ordered_json::array({enc.coords[0], enc.coords[1], enc.coords[2], enc.coords[3]});
}

SpatialEncoding box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of 4 numbers");
  std::array<double, 4> c{};
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw DataError("box holds a non-number");
    c[i] = j[i].get<double>();
  }
  return SpatialEncoding::from_normalized(c);
}

template <std::size_t N>
void read_slots(const json& items, std::array<Slot, N>& slots, int dim, const Vector& pad,
                const char* tag_key, bool has_confidence, const char* what) {
  if (!items.is_array()) throw DataError(std::string(what) + " is not an array");
  if (items.size() > N) {
    throw DataError(std::string(what) + " holds " + std::to_string(items.size()) +
                    " items, capacity is " + std::to_string(N));
  }
  for (std::size_t s = 0; s < items.size(); ++s) {
    const json& item = items[s];
    Slot slot;
    slot.is_pad = false;
    slot.embedding = vector_from_json(item.at("embedding"), dim, what);
    slot.spatial = box_from_json(item.at("box"));
    if (tag_key != nullptr) slot.tag = item.at(tag_key).get<std::string>();
    slot.confidence = has_confidence ? item.at("confidence").get<double>() : 1.0;
    slots[s] = std::move(slot);
  }
  pad_slots(slots, items.size(), pad);
}

template <std::size_t N>
void check_slots(const std::array<Slot, N>& slots, int dim, const Vector& pad, const char* what) {
  bool seen_pad = false;
  for (const auto& s : slots) {
    if (s.embedding.size() != dim) {
      throw DataError(std::string(what) + " slot embedding has wrong dimension");
    }
    if (s.is_pad) {
      seen_pad = true;
      if (!s.spatial.is_zero()) throw DataError(std::string(what) + " pad slot has a non-zero box");
      if (s.embedding != pad) throw DataError(std::string(what) + " pad slot has a foreign vector");
    } else if (seen_pad) {
      throw DataError(std::string(what) + " real slot follows a pad slot");
    }
  }
}

} // namespace

std::size_t FeatureRecord::real_text_count() const { return count_real(text_slots); }
std::size_t FeatureRecord::real_object_count() const { return count_real(object_slots); }
std::size_t FeatureRecord::real_face_count() const { return count_real(face_slots); }

ordered_json feature_record_to_json(const FeatureRecord& r) {
  ordered_json j;
  j["meme_id"] = r.meme_id;
  j["label"] = std::string(to_string(r.label));
  j["image_embedding"] = vector_to_json(r.image_embedding);
  j["text_embedding"] = vector_to_json(r.text_embedding);
  ordered_json clusters = ordered_json::array();
  for (const auto& s : r.text_slots) {
    if (s.is_pad) break;
    ordered_json item;
    item["text"] = s.tag;
    item["box"] = box_to_json(s.spatial);
    item["embedding"] = vector_to_json(s.embedding);
    clusters.push_back(std::move(item));
  }
  j["text_clusters"] = std::move(clusters);
  ordered_json objects = ordered_json::array();
  for (const auto& s : r.object_slots) {
    if (s.is_pad) break;
    ordered_json item;
    item["label"] = s.tag;
    item["confidence"] = s.confidence;
    item["box"] = box_to_json(s.spatial);
    item["embedding"] = vector_to_json(s.embedding);
    objects.push_back(std::move(item));
  }
  j["objects"] = std::move(objects);
  ordered_json faces = ordered_json::array();
  for (const auto& s : r.face_slots) {
    if (s.is_pad) break;
    ordered_json item;
    item["confidence"] = s.confidence;
    item["box"] = box_to_json(s.spatial);
    item["embedding"] = vector_to_json(s.embedding);
    faces.push_back(std::move(item));
  }
  j["faces"] = std::move(faces);
  return j;
}

FeatureRecord feature_record_from_json(const json& j, const EncoderDims& dims,
                                       const PadVectors& pads) {
  FeatureRecord r;
  try {
    r.meme_id = j.at("meme_id").get<std::string>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.image_embedding = vector_from_json(j.at("image_embedding"), dims.visual, "image_embedding");
    r.text_embedding = vector_from_json(j.at("text_embedding"), dims.text, "text_embedding");
    read_slots(j.at("text_clusters"), r.text_slots, dims.text, pads.text, "text", false,
               "text_clusters");
    read_slots(j.at("objects"), r.object_slots, dims.visual, pads.object, "label", true, "objects");
    read_slots(j.at("faces"), r.face_slots, dims.face, Vector::Zero(dims.face), nullptr, true,
               "faces");
  } catch (const json::exception& e) {
    throw DataError(std::string("feature record: ") + e.what());
  }
  return r;
}

std::filesystem::path pads_sidecar_path(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  p.replace_extension(".pads.json");
  return p;
}

void write_feature_manifest(const std::filesystem::path& path, const FeatureSet& set) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : set.records) out << feature_record_to_json(r).dump() << '\n';
  }
  ordered_json side;
  side["format"] = "memesent-pads";
  side["version"] = 1;
  side["d_t"] = set.dims.text;
  side["d_v"] = set.dims.visual;
  side["d_f"] = set.dims.face;
  side["text_pad"] = vector_to_json(set.pads.text);
  side["object_pad"] = vector_to_json(set.pads.object);
  std::ofstream out(pads_sidecar_path(path), std::ios::binary);
  if (!out) throw DataError("cannot write " + pads_sidecar_path(path).string());
  out << side.dump() << '\n';
}

FeatureSet load_feature_manifest(const std::filesystem::path& path) {
  const auto side_path = pads_sidecar_path(path);
  std::ifstream side_in(side_path);
  if (!side_in) throw DataError("missing pad sidecar " + side_path.string());
  FeatureSet set;
  try {
    const json side = json::parse(side_in);
    if (side.at("format").get<std::string>() != "memesent-pads" || side.at("version") != 1) {
      throw DataError("unsupported pad sidecar format in " + side_path.string());
    }
    set.dims = EncoderDims{side.at("d_t").get<int>(), side.at("d_v").get<int>(),
                           side.at("d_f").get<int>()};
    set.pads.text = vector_from_json(side.at("text_pad"), set.dims.text, "text_pad");
    set.pads.object = vector_from_json(side.at("object_pad"), set.dims.visual, "object_pad");
  } catch (const json::exception& e) {
    throw DataError(side_path.string() + ": " + e.what());
  }

  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature manifest " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      set.records.push_back(feature_record_from_json(json::parse(line), set.dims, set.pads));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

void validate_feature_record(const FeatureRecord& r, const EncoderDims& dims,
                             const PadVectors& pads) {
  if (r.image_embedding.size() != dims.visual) throw DataError("image_embedding dimension");
  if (r.text_embedding.size() != dims.text) throw DataError("text_embedding dimension");
  check_slots(r.text_slots, dims.text, pads.text, "text");
  check_slots(r.object_slots, dims.visual, pads.object, "object");
  check_slots(r.face_slots, dims.face, Vector::Zero(dims.face), "face");
}

} // namespace memesent
