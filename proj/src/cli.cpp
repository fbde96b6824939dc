#include "memesent/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "memesent/checkpoint.hpp"
#include "memesent/encoders.hpp"
#include "memesent/error.hpp"
#include "memesent/evaluation.hpp"
#include "memesent/ingestion.hpp"
#include "memesent/synthetic.hpp"
#include "memesent/training.hpp"

namespace memesent {

namespace {

namespace fs = std::filesystem;

struct DimOptions {
  int text = 512;
  int visual = 512;
  int face = 128;

  void attach(CLI::App* cmd) {
    cmd->add_option("--d-text", text, "Text embedding width")->capture_default_str();
    cmd->add_option("--d-visual", visual, "Image/object embedding width")->capture_default_str();
    cmd->add_option("--d-face", face, "Face embedding width")->capture_default_str();
  }
  EncoderDims dims() const { return EncoderDims{text, visual, face}; }
};

template <typename T, std::size_t N>
std::array<T, N> parse_list(const std::string& text, const char* flag) {
  std::array<T, N> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t k = 0;
  while (std::getline(ss, item, ',')) {
    if (k >= N) throw UsageError(std::string(flag) + " takes " + std::to_string(N) + " comma-separated values");
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) out[k] = static_cast<T>(std::stod(item, &used));
      else out[k] = static_cast<T>(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError(std::string(flag) + ": cannot parse \"" + item + "\"");
    }
    ++k;
  }
  if (k != N) throw UsageError(std::string(flag) + " takes " + std::to_string(N) + " comma-separated values");
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

EvalReport read_report(const fs::path& run_or_file) {
  const fs::path path = fs::is_directory(run_or_file) ? run_or_file / "report.json" : run_or_file;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

} // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Spatially-encoded multimodal meme sentiment classifiers"};
  app.name("memesent");
  app.require_subcommand(1, 1);

  // extract
  std::string ex_manifest, ex_backend, ex_fixtures, ex_out, ex_text_source = "ocr";
  DimOptions ex_dims;
  auto* extract_cmd = app.add_subcommand("extract", "Run detectors/encoders over a dataset manifest");
  extract_cmd->add_option("--manifest", ex_manifest, "Dataset manifest (JSONL)")->required();
  extract_cmd->add_option("--backend", ex_backend, "Encoder backend")
      ->required()
      ->check(CLI::IsMember({"stub", "precomputed"}));
  extract_cmd->add_option("--fixtures", ex_fixtures,
                          "Stub fixture JSONL, or the feature manifest served by the precomputed backend")
      ->required();
  extract_cmd->add_option("--out", ex_out, "Output feature manifest (JSONL)")->required();
  extract_cmd->add_option("--text-source", ex_text_source, "Global text: OCR clusters or curated_text")
      ->check(CLI::IsMember({"ocr", "curated"}))
      ->capture_default_str();
  ex_dims.attach(extract_cmd);

  // synth
  std::string sy_out, sy_balance, sy_split;
  int sy_n = 300;
  std::uint64_t sy_seed = 7;
  DimOptions sy_dims;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-rule synthetic dataset");
  synth_cmd->add_option("--out", sy_out, "Output directory")->required();
  synth_cmd->add_option("--n", sy_n, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--seed", sy_seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--balance", sy_balance, "Class fractions neg,neu,pos (default equal)");
  synth_cmd->add_option("--split", sy_split, "Optional train,val,test sizes summing to --n");
  sy_dims.attach(synth_cmd);

  // train
  std::string tr_features, tr_val_features, tr_variant, tr_config, tr_out;
  std::uint64_t tr_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one model variant");
  train_cmd->add_option("--features", tr_features, "Training feature manifest")->required();
  train_cmd->add_option("--val-features", tr_val_features,
                        "Validation feature manifest (default: stratified split of --features)");
  train_cmd->add_option("--variant", tr_variant,
                        "baseline, obj-nospatial, obj-spatial, img-obj-spatial, face-nospatial, "
                        "face-spatial or img-face-spatial")
      ->required();
  train_cmd->add_option("--config", tr_config, "Train config JSON (missing keys take defaults)");
  train_cmd->add_option("--out", tr_out, "Run directory")->required();
  auto* seed_opt = train_cmd->add_option("--seed", tr_seed, "Overrides the config seed");

  // evaluate
  std::string ev_run, ev_features, ev_report, ev_checkpoint = "best";
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a run's checkpoint on a feature manifest");
  eval_cmd->add_option("--run", ev_run, "Run directory")->required();
  eval_cmd->add_option("--features", ev_features, "Feature manifest to evaluate on")->required();
  eval_cmd->add_option("--report", ev_report, "Report path (default: <run>/report.json)");
  eval_cmd->add_option("--checkpoint", ev_checkpoint, "Which checkpoint to load")
      ->check(CLI::IsMember({"best", "last"}))
      ->capture_default_str();

  // compare
  std::string cmp_a, cmp_b, cmp_out;
  auto* compare_cmd = app.add_subcommand("compare", "Relative performance of run A against run B");
  compare_cmd->add_option("--run-a", cmp_a, "Run directory (or report.json) of the model")->required();
  compare_cmd->add_option("--run-b", cmp_b, "Run directory (or report.json) compared against")->required();
  compare_cmd->add_option("--out", cmp_out,
                          "Output directory for compare.json and compare.txt (default: run A's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*extract_cmd) {
      const fs::path manifest_path(ex_manifest);
      const auto records = load_manifest(manifest_path);
      std::unique_ptr<EncoderBackend> backend;
      if (ex_backend == "stub") {
        backend = std::make_unique<StubBackend>(ex_dims.dims(), load_stub_fixtures(ex_fixtures));
      } else {
        backend = PrecomputedBackend::from_file(ex_fixtures);
      }
      const TextSource source = ex_text_source == "curated" ? TextSource::Curated : TextSource::Ocr;
      const FeatureSet set = extract_features(records, *backend, source, manifest_path.parent_path());
      write_feature_manifest(ex_out, set);
      std::cerr << "extract: " << set.records.size() << " of " << records.size()
                << " memes kept after filtering\n";
    } else if (*synth_cmd) {
      SynthConfig config;
      config.n_samples = sy_n;
      config.seed = sy_seed;
      if (!sy_balance.empty()) config.class_balance = parse_list<double, 3>(sy_balance, "--balance");
      if (!sy_split.empty()) config.split_counts = parse_list<int, 3>(sy_split, "--split");
      const SynthDataset ds = generate(config);
      const SynthFiles files = write_synth_dataset(sy_out, ds, sy_dims.dims());
      std::cerr << "synth: wrote " << ds.manifest.size() << " samples to " << sy_out << "\n";
    } else if (*train_cmd) {
      const ModelVariant variant = parse_variant(tr_variant);
      TrainConfig config = tr_config.empty() ? TrainConfig{} : load_train_config(tr_config);
      if (*seed_opt) config.seed = tr_seed;
      config.validate();
      FeatureSet train_set = load_feature_manifest(tr_features);
      std::vector<FeatureRecord> train_records;
      std::vector<FeatureRecord> val_records;
      if (!tr_val_features.empty()) {
        FeatureSet val_set = load_feature_manifest(tr_val_features);
        if (!(val_set.dims == train_set.dims)) {
          throw DataError("training and validation manifests have different dimensions");
        }
        train_records = std::move(train_set.records);
        val_records = std::move(val_set.records);
      } else {
        auto [tr, va] = stratified_split(train_set.records, config.train_fraction, config.seed);
        train_records = std::move(tr);
        val_records = std::move(va);
      }
      const TrainResult result = train(variant, train_records, val_records, config, tr_out);
      std::cerr << "train: " << variant_name(variant) << " stopped after epoch " << result.last_epoch
                << ", best epoch " << result.best_epoch << "\n";
    } else if (*eval_cmd) {
      const fs::path run(ev_run);
      const Checkpoint ck = load_checkpoint(run / (ev_checkpoint + ".ckpt"));
      const FeatureSet set = load_feature_manifest(ev_features);
      if (!(set.dims == ck.params.config.dims)) {
        throw DataError("feature dimensions do not match the checkpoint");
      }
      const EvalReport report = evaluate(ck.params, set.records);
      const fs::path out = ev_report.empty() ? run / "report.json" : fs::path(ev_report);
      write_file(out, report_to_json(report).dump(2) + "\n");
      std::cerr << "evaluate: macro-F1 " << report.macro_f1 << ", weighted-F1 " << report.weighted_f1 << "\n";
    } else if (*compare_cmd) {
      const Comparison c = compare(read_report(cmp_a), read_report(cmp_b));
      fs::path out(cmp_out);
      if (out.empty()) out = fs::is_directory(cmp_a) ? fs::path(cmp_a) : fs::path(cmp_a).parent_path();
      if (!out.empty()) fs::create_directories(out);
      write_file(out / "compare.json", comparison_to_json(c).dump(2) + "\n");
      write_file(out / "compare.txt", comparison_to_text(c));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const RuntimeFailure& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

} // namespace memesent
