#include "memesent/ingestion.hpp"

#include <fstream>
#include <unordered_set>

#include "memesent/error.hpp"

namespace memesent {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Split split) {
  switch (split) {
  case Split::Train: return "train";
  case Split::Val: return "val";
  case Split::Test: return "test";
  case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  if (text == "unassigned") return Split::Unassigned;
  throw DataError("unknown split \"" + std::string(text) + "\"");
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.meme_id = j.at("meme_id").get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      if (j.contains("curated_text") && !j["curated_text"].is_null()) {
        r.curated_text = j["curated_text"].get<std::string>();
      }
      r.label = parse_label(j.at("label").get<std::string>());
      if (j.contains("split")) r.split = parse_split(j["split"].get<std::string>());
      if (!seen.insert(r.meme_id).second) throw DataError("duplicate meme_id " + r.meme_id);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) {
    ordered_json j;
    j["meme_id"] = r.meme_id;
    j["image_path"] = r.image_path.generic_string();
    if (r.curated_text) j["curated_text"] = *r.curated_text;
    j["label"] = std::string(to_string(r.label));
    j["split"] = std::string(to_string(r.split));
    out << j.dump() << '\n';
  }
}

std::vector<ManifestRecord> filter_samples(const std::vector<ManifestRecord>& records,
                                           const std::map<std::string, DetectionCounts>& detections) {
  std::vector<ManifestRecord> kept;
  for (const auto& r : records) {
    const auto it = detections.find(r.meme_id);
    if (it == detections.end()) throw DataError("no detection counts for meme_id " + r.meme_id);
    if (it->second.objects >= 1 && it->second.clusters >= 1) kept.push_back(r);
  }
  return kept;
}

std::string concat_clusters(std::span<const TextCluster> clusters) {
  std::string out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += clusters[i].text;
  }
  return out;
}

void sort_reading_order(std::vector<TextCluster>& clusters) {
  std::stable_sort(clusters.begin(), clusters.end(), [](const TextCluster& a, const TextCluster& b) {
    if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
    return a.box.x_min < b.box.x_min;
  });
}

namespace {

template <typename Item>
void sort_confidence_desc(std::vector<Item>& items) {
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.box.area() > b.box.area();
  });
}

} // namespace

void sort_by_confidence(std::vector<VisualObject>& objects) { sort_confidence_desc(objects); }
void sort_by_confidence(std::vector<Face>& faces) { sort_confidence_desc(faces); }

ExtractionResult extract(const ManifestRecord& record, const EncoderBackend& backend,
                         TextSource text_source, const std::filesystem::path& image_root) {
  const std::filesystem::path image_path =
      record.image_path.is_absolute() || image_root.empty() ? record.image_path
                                                            : image_root / record.image_path;
  ExtractionResult ex;
  ex.meme_id = record.meme_id;
  ex.label = record.label;
  ex.image = load_image(record.meme_id, image_path);
  ex.frame = backend.frame_size(ex.image);
  ex.clusters = backend.detect_text_clusters(ex.image);
  ex.objects = backend.detect_objects(ex.image);
  ex.faces = backend.detect_faces(ex.image);
  if (text_source == TextSource::Curated) {
    if (!record.curated_text) {
      throw DataError("meme_id " + record.meme_id + " has no curated_text");
    }
    ex.text_override = record.curated_text;
  }
  return ex;
}

FeatureRecord build_feature_record(const ExtractionResult& ex, const EncoderBackend& backend) {
  if (ex.clusters.empty() || ex.objects.empty()) {
    throw DataError("meme_id " + ex.meme_id + " needs at least one object and one text cluster");
  }
  const EncoderDims& dims = backend.dims();
  auto checked = [&](Vector v, int dim, const char* what) {
    if (v.size() != dim) {
      throw DataError(std::string(what) + " embedding for meme_id " + ex.meme_id +
                      " has dimension " + std::to_string(v.size()) + ", expected " +
                      std::to_string(dim));
    }
    return v;
  };

  std::vector<TextCluster> clusters = ex.clusters;
  sort_reading_order(clusters);
  std::vector<VisualObject> objects = ex.objects;
  sort_by_confidence(objects);
  std::vector<Face> faces = ex.faces;
  sort_by_confidence(faces);

  FeatureRecord r;
  r.meme_id = ex.meme_id;
  r.label = ex.label;
  r.image_embedding = checked(backend.encode_image(ex.image), dims.visual, "image");
  const std::string global_text = ex.text_override ? *ex.text_override : concat_clusters(clusters);
  r.text_embedding = checked(backend.encode_meme_text(ex.image, global_text), dims.text, "text");

  const std::size_t n_text = std::min(clusters.size(), kTextSlots);
  for (std::size_t s = 0; s < n_text; ++s) {
    const TextCluster& c = clusters[s];
    if (c.text.empty()) throw DataError("meme_id " + ex.meme_id + " has an empty text cluster");
    r.text_slots[s] = Slot{checked(backend.encode_text(c.text), dims.text, "text cluster"),
                           normalize_box(c.box, ex.frame.width, ex.frame.height), false, c.text,
                           c.confidence};
  }
  pad_slots(r.text_slots, n_text, backend.text_pad());

  const std::size_t n_obj = std::min(objects.size(), kObjectSlots);
  for (std::size_t s = 0; s < n_obj; ++s) {
    const VisualObject& o = objects[s];
    r.object_slots[s] = Slot{checked(backend.encode_region(ex.image, o), dims.visual, "object"),
                             normalize_box(o.box, ex.frame.width, ex.frame.height), false,
                             o.class_label, o.confidence};
  }
  pad_slots(r.object_slots, n_obj, backend.object_pad());

  const std::size_t n_face = std::min(faces.size(), kFaceSlots);
  for (std::size_t s = 0; s < n_face; ++s) {
    const Face& f = faces[s];
    r.face_slots[s] = Slot{checked(f.embedding, dims.face, "face"),
                           normalize_box(f.box, ex.frame.width, ex.frame.height), false, {},
                           f.confidence};
  }
  pad_slots(r.face_slots, n_face, Vector::Zero(dims.face));
  return r;
}

FeatureSet extract_features(const std::vector<ManifestRecord>& records, const EncoderBackend& backend,
                            TextSource text_source, const std::filesystem::path& image_root) {
  std::vector<ExtractionResult> extracted;
  extracted.reserve(records.size());
  std::map<std::string, DetectionCounts> counts;
  for (const auto& r : records) {
    extracted.push_back(extract(r, backend, text_source, image_root));
    counts[r.meme_id] = extracted.back().counts();
  }
  const std::vector<ManifestRecord> kept = filter_samples(records, counts);
  std::unordered_set<std::string> keep_ids;
  for (const auto& r : kept) keep_ids.insert(r.meme_id);

  FeatureSet set{backend.dims(), backend.pads(), {}};
  for (const auto& ex : extracted) {
    if (keep_ids.count(ex.meme_id) != 0) set.records.push_back(build_feature_record(ex, backend));
  }
  return set;
}

} // namespace memesent
