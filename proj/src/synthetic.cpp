#include "memesent/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "memesent/error.hpp"
#include "memesent/rng.hpp"

namespace memesent {

void SynthConfig::validate() const {
  if (n_samples < 3) throw UsageError("n_samples must be at least 3");
  double sum = 0.0;
  for (double f : class_balance) {
    if (!(f >= 0.0)) throw UsageError("class balance fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("class balance fractions must sum to 1");
  if (max_extra_clusters < 0 || max_extra_objects < 0 || max_faces < 0) {
    throw UsageError("distractor ranges must be non-negative");
  }
  if (!(image_size > 0.0)) throw UsageError("image size must be positive");
  if (split_counts) {
    const auto& s = *split_counts;
    if (s[0] < 0 || s[1] < 0 || s[2] < 0 || s[0] + s[1] + s[2] != n_samples) {
      throw UsageError("split counts must be non-negative and sum to n_samples");
    }
  }
}

SentimentLabel planted_label(const BBox& anchor, double cx, double cy) {
  if (cx >= anchor.x_min && cx <= anchor.x_max && cy >= anchor.y_min && cy <= anchor.y_max) {
    return SentimentLabel::Positive;
  }
  if (cy < anchor.y_min) return SentimentLabel::Negative;
  return SentimentLabel::Neutral;
}

std::array<std::int64_t, 3> class_quotas(int n, const std::array<double, 3>& balance) {
  std::array<std::int64_t, 3> q{};
  std::array<double, 3> rem{};
  std::int64_t assigned = 0;
  for (int c = 0; c < 3; ++c) {
    const double exact = balance[c] * n;
    q[c] = static_cast<std::int64_t>(std::floor(exact + 1e-9));
    rem[c] = exact - static_cast<double>(q[c]);
    assigned += q[c];
  }
  while (assigned < n) {
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (rem[c] > rem[best]) best = c;
    }
    ++q[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return q;
}

namespace {

BBox random_box(Rng& rng, double size, double min_frac, double max_frac) {
  const double w = rng.uniform(min_frac, max_frac) * size;
  const double h = rng.uniform(min_frac, max_frac) * size;
  const double x = rng.uniform(0.0, size - w);
  const double y = rng.uniform(0.0, size - h);
  return BBox{x, y, x + w, y + h};
}

BBox text_box(Rng& rng, double size) {
  const double w = rng.uniform(0.1, 0.3) * size;
  const double h = rng.uniform(0.04, 0.1) * size;
  const double cx = rng.uniform(w / 2.0, size - w / 2.0);
  const double cy = rng.uniform(h / 2.0, size - h / 2.0);
  return BBox{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& options) {
  return options[rng.below(N)];
}

} // namespace

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  const auto quotas = class_quotas(config.n_samples, config.class_balance);
  std::array<std::int64_t, 3> filled{};
  // Geometry and decoration use separate streams: the decoration of a sample
  // never depends on how many draws the rejection loop needed.
  Rng geometry_rng(config.seed);
  Rng content_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  const double S = config.image_size;

  SynthDataset ds;
  constexpr long kMaxDraws = 1'000'000;
  long draws = 0;
  while (static_cast<int>(ds.manifest.size()) < config.n_samples) {
    if (++draws > kMaxDraws) {
      throw DataError("unattainable class balance within " + std::to_string(kMaxDraws) + " draws");
    }
    const BBox anchor = random_box(geometry_rng, S, 0.2, 0.5);
    const BBox primary = text_box(geometry_rng, S);
    const double cx = 0.5 * (primary.x_min + primary.x_max);
    const double cy = 0.5 * (primary.y_min + primary.y_max);
    const SentimentLabel label = planted_label(anchor, cx, cy);
    const int c = class_index(label);
    if (filled[c] >= quotas[c]) continue;
    ++filled[c];

    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", ds.manifest.size());
    StubFixture fx;
    fx.meme_id = id;
    fx.frame = FrameSize{S, S};
    fx.clusters.push_back(TextCluster{pick(content_rng, kPrimaryTokens), primary, content_rng.uniform(0.5, 1.0)});
    const int extra_clusters = static_cast<int>(content_rng.below(config.max_extra_clusters + 1));
    for (int k = 0; k < extra_clusters; ++k) {
      fx.clusters.push_back(
          TextCluster{pick(content_rng, kDistractorTokens), text_box(content_rng, S), content_rng.uniform(0.5, 1.0)});
    }
    fx.objects.push_back(VisualObject{pick(content_rng, kAnchorClasses), anchor, content_rng.uniform(0.5, 1.0)});
    const int extra_objects = static_cast<int>(content_rng.below(config.max_extra_objects + 1));
    for (int k = 0; k < extra_objects; ++k) {
      fx.objects.push_back(VisualObject{pick(content_rng, kDistractorClasses), random_box(content_rng, S, 0.1, 0.4),
                                        content_rng.uniform(0.5, 1.0)});
    }
    const int faces = static_cast<int>(content_rng.below(config.max_faces + 1));
    for (int k = 0; k < faces; ++k) {
      fx.faces.push_back(FixtureFace{random_box(content_rng, S, 0.05, 0.2), content_rng.uniform(0.5, 1.0), {}});
    }

    ManifestRecord rec;
    rec.meme_id = id;
    rec.image_path = std::filesystem::path("images") / (std::string(id) + ".img");
    rec.label = label;
    ds.manifest.push_back(std::move(rec));
    ds.fixtures.push_back(std::move(fx));
  }

  if (config.split_counts) {
    const auto& sizes = *config.split_counts;
    Rng split_rng(config.seed ^ 0x8bb84b93962eacc9ULL);
    for (int c = 0; c < 3; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < ds.manifest.size(); ++i) {
        if (class_index(ds.manifest[i].label) == c) members.push_back(i);
      }
      split_rng.shuffle(members);
      const double n_c = static_cast<double>(members.size());
      const auto n_train = static_cast<std::size_t>(std::llround(n_c * sizes[0] / config.n_samples));
      const auto n_val = std::min(members.size() - n_train,
                                  static_cast<std::size_t>(std::llround(n_c * sizes[1] / config.n_samples)));
      for (std::size_t k = 0; k < members.size(); ++k) {
        ds.manifest[members[k]].split = k < n_train ? Split::Train : k < n_train + n_val ? Split::Val : Split::Test;
      }
    }
  }
  return ds;
}

SynthFiles write_synth_dataset(const std::filesystem::path& out_dir, const SynthDataset& ds,
                               const EncoderDims& dims) {
  std::filesystem::create_directories(out_dir / "images");
  SynthFiles files;
  files.manifest = out_dir / "manifest.jsonl";
  files.fixtures = out_dir / "fixtures.jsonl";
  files.features = out_dir / "features.jsonl";
  write_manifest(files.manifest, ds.manifest);
  write_stub_fixtures(files.fixtures, ds.fixtures);
  for (const auto& r : ds.manifest) {
    std::ofstream img(out_dir / r.image_path, std::ios::binary);
    if (!img) throw DataError("cannot write placeholder image for " + r.meme_id);
    img << "memesent synthetic placeholder " << r.meme_id << '\n';
  }

  FixtureMap fixtures;
  for (const auto& f : ds.fixtures) fixtures.emplace(f.meme_id, f);
  const StubBackend backend(dims, std::move(fixtures));
  const FeatureSet all = extract_features(ds.manifest, backend, TextSource::Ocr, out_dir);
  write_feature_manifest(files.features, all);

  bool has_splits = false;
  for (const auto& r : ds.manifest) has_splits = has_splits || r.split != Split::Unassigned;
  if (has_splits) {
    std::array<FeatureSet, 3> parts;
    for (auto& p : parts) p = FeatureSet{all.dims, all.pads, {}};
    for (std::size_t i = 0; i < ds.manifest.size(); ++i) {
      const Split s = ds.manifest[i].split;
      if (s == Split::Train) parts[0].records.push_back(all.records[i]);
      else if (s == Split::Val) parts[1].records.push_back(all.records[i]);
      else if (s == Split::Test) parts[2].records.push_back(all.records[i]);
    }
    const std::array<const char*, 3> names{"train", "val", "test"};
    std::array<std::filesystem::path, 3> paths;
    for (int k = 0; k < 3; ++k) {
      paths[k] = out_dir / ("features." + std::string(names[k]) + ".jsonl");
      write_feature_manifest(paths[k], parts[k]);
    }
    files.split_features = paths;
  }
  return files;
}

} // namespace memesent
