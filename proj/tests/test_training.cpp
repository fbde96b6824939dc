#include "doctest.h"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "memesent/checkpoint.hpp"
#include "memesent/error.hpp"
#include "memesent/evaluation.hpp"
#include "memesent/model.hpp"
#include "memesent/synthetic.hpp"
#include "memesent/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace memesent;

namespace {

FeatureSet small_synthetic(const testutil::TempDir& dir, int n, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  const auto files = write_synth_dataset(dir.path() / "data", generate(cfg), {8, 8, 4});
  return load_feature_manifest(files.features);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.max_epochs = 3;
  c.hidden_size = 4;
  c.seed = 5;
  return c;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  p.for_each_tensor([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
    out.insert(out.end(), d, d + r * c);
  });
  return out;
}

} // namespace

TEST_CASE("class_weights") {
  const auto w = class_weights({518, 1837, 3450});
  CHECK(w[0] == doctest::Approx(5805.0 / (3 * 518)).epsilon(1e-12));
  CHECK(std::abs(w[0] - 3.7355) < 1e-4);
  CHECK(std::abs(w[1] - 1.0534) < 1e-4);
  CHECK(std::abs(w[2] - 0.5609) < 1e-4);
  for (double x : class_weights({10, 10, 10})) CHECK(x == 1.0);
  CHECK_THROWS_AS(class_weights({0, 3, 4}), DataError);

  Rng rng(1);
  for (int n = 0; n < 200; ++n) {
    const std::array<std::int64_t, 3> c{1 + static_cast<std::int64_t>(rng.below(1000)),
                                        1 + static_cast<std::int64_t>(rng.below(1000)),
                                        1 + static_cast<std::int64_t>(rng.below(1000))};
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(50));
    const auto a = class_weights(c);
    const auto b = class_weights({c[0] * k, c[1] * k, c[2] * k});
    double weighted = 0.0;
    for (int i = 0; i < 3; ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
      weighted += a[i] * static_cast<double>(c[i]);
    }
    // Weighted class mass is the same for every class, so the total equals N.
    CHECK(weighted == doctest::Approx(static_cast<double>(c[0] + c[1] + c[2])).epsilon(1e-12));
  }
}

TEST_CASE("triangular_lr anchors") {
  const TrainConfig c;
  const std::array<std::int64_t, 5> it{0, 26, 52, 78, 104};
  const std::array<double, 5> lr{1e-4, 5.5e-4, 1e-3, 5.5e-4, 1e-4};
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(triangular_lr(it[k], c) - lr[k]) <= 1e-12 * lr[k]);
}

TEST_CASE("triangular_lr: periodic and bounded") {
  TrainConfig c;
  for (int step : {1, 3, 52, 100}) {
    c.lr_step_size = step;
    for (std::int64_t i = 0; i < 6 * step; ++i) {
      const double lr = triangular_lr(i, c);
      CHECK(lr >= c.lr_base);
      CHECK(lr <= c.lr_max);
      CHECK(lr == doctest::Approx(triangular_lr(i + 2 * step, c)).epsilon(1e-12));
      if (i % (2 * step) == 0) CHECK(lr == c.lr_base);
      if (i % (2 * step) == step) CHECK(lr == c.lr_max);
    }
  }
}

TEST_CASE("nll_loss examples") {
  const std::array<double, 3> w{2, 1, 1};
  Matrix perfect = Matrix::Constant(2, 3, -50.0);
  perfect(0, 0) = 0.0;
  perfect(1, 1) = 0.0;
  CHECK(nll_loss(perfect, std::vector<int>{0, 1}, w) == 0.0);

  const Matrix uniform = Matrix::Constant(1, 3, std::log(1.0 / 3.0));
  CHECK(nll_loss(uniform, std::vector<int>{2}, {5, 0.1, 7}) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  Matrix lp(2, 3);
  lp << std::log(.5), std::log(.25), std::log(.25), std::log(.25), std::log(.5), std::log(.25);
  CHECK(nll_loss(lp, std::vector<int>{0, 1}, w) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("nll_loss is non-negative") {
  Rng rng(2);
  for (int n = 0; n < 500; ++n) {
    const auto b = static_cast<Eigen::Index>(1 + rng.below(8));
    Matrix lp(b, 3);
    std::vector<int> labels;
    for (Eigen::Index r = 0; r < b; ++r) {
      Vector logits = oracle::random_matrix(rng, 3, 1, 3.0);
      const double lse = std::log(logits.array().exp().sum());
      lp.row(r) = (logits.array() - lse).matrix().transpose();
      labels.push_back(static_cast<int>(rng.below(3)));
    }
    CHECK(nll_loss(lp, labels, {rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.1, 3)}) > 0.0);
  }
}

TEST_CASE("early stopping") {
  EarlyStopping s(1);
  CHECK(s.update(1, 0.5));
  CHECK_FALSE(s.should_stop());
  CHECK_FALSE(s.update(2, 0.4));
  CHECK(s.should_stop());
  CHECK(s.best_epoch() == 1);

  EarlyStopping tie(2);
  tie.update(1, 0.3);
  CHECK_FALSE(tie.update(2, 0.3));
  CHECK(tie.best_epoch() == 1);

  Rng rng(3);
  for (int n = 0; n < 100; ++n) {
    EarlyStopping es(1 + static_cast<int>(rng.below(4)));
    double best_so_far = -1.0;
    for (int e = 1; e <= 30 && !es.should_stop(); ++e) {
      const double m = rng.uniform();
      es.update(e, m);
      best_so_far = std::max(best_so_far, m);
      CHECK(es.best_metric() == best_so_far);
    }
  }
  CHECK_THROWS_AS(EarlyStopping(0), UsageError);
}

TEST_CASE("AdamW matches the reference update") {
  ModelConfig mc;
  mc.dims = {4, 4, 2};
  mc.hidden_size = 2;
  ModelParams p = init_params(ModelVariant::Baseline, mc, 1);
  oracle::randomize(p, 2, 0.5);
  TrainConfig tc;
  AdamW opt(p, tc);
  std::vector<double> ref = flatten(p);
  std::vector<double> m(ref.size(), 0.0), v(ref.size(), 0.0);
  Rng rng(4);
  for (int t = 1; t <= 4; ++t) {
    ModelParams g = p.zeros_like();
    oracle::randomize(g, 100 + t, 1.0);
    const auto gf = flatten(g);
    const double lr = triangular_lr(t - 1, tc);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      m[i] = tc.beta1 * m[i] + (1 - tc.beta1) * gf[i];
      v[i] = tc.beta2 * v[i] + (1 - tc.beta2) * gf[i] * gf[i];
      const double mh = m[i] / (1 - std::pow(tc.beta1, t));
      const double vh = v[i] / (1 - std::pow(tc.beta2, t));
      ref[i] = ref[i] * (1 - lr * tc.weight_decay) - lr * mh / (std::sqrt(vh) + tc.eps);
    }
    opt.step(p, g, lr);
    const auto got = flatten(p);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  CHECK(opt.steps() == 4);
}

TEST_CASE("train config JSON") {
  TrainConfig c;
  c.batch_size = 64;
  c.eval_metric = EvalMetric::WeightedF1;
  c.seed = 9;
  const auto back = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK(train_config_from_json(nlohmann::json::object()).batch_size == 512);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_sz", 3}}), UsageError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"lr_base", 1e-2}}), UsageError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_size", 0}}), UsageError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"patience", 0}}), UsageError);
}

TEST_CASE("checkpoint round-trip and corruption") {
  testutil::TempDir dir("ckpt");
  ModelConfig mc;
  mc.dims = {6, 5, 3};
  mc.hidden_size = 3;
  mc.mask_pads = true;
  for (auto v : kAllVariants) {
    ModelParams p = init_params(v, mc, 77);
    oracle::randomize(p, 78, 1.0);
    const auto path = dir / (std::string(variant_name(v)) + ".ckpt");
    save_checkpoint(path, p, 12);
    const auto ck = load_checkpoint(path);
    CHECK(ck.epoch == 12);
    CHECK(ck.params.variant == v);
    CHECK(ck.params.config.dims == mc.dims);
    CHECK(ck.params.config.hidden_size == 3);
    CHECK(ck.params.config.mask_pads);
    CHECK(ck.params.seed == 77);
    CHECK(flatten(ck.params) == flatten(p));
  }
  const auto good = testutil::read_file(dir / "obj-spatial.ckpt");
  CHECK(good.substr(0, 4) == "MSCK");
  CHECK(static_cast<unsigned char>(good[4]) == 1);
  testutil::write_file(dir / "trunc.ckpt", good.substr(0, good.size() - 8));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), DataError);
  testutil::write_file(dir / "extra.ckpt", good + "x");
  CHECK_THROWS_AS(load_checkpoint(dir / "extra.ckpt"), DataError);
  testutil::write_file(dir / "magic.ckpt", "MSCX" + good.substr(4));
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), DataError);
}

TEST_CASE("train: artifacts, determinism and best-epoch bookkeeping") {
  testutil::TempDir dir("train");
  const FeatureSet fs = small_synthetic(dir, 150, 3);
  const auto [tr, va] = stratified_split(fs.records, 0.8, 1);
  const std::vector<FeatureRecord> train_copy = tr;
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 4;
  cfg.patience = 4;
  const auto r1 = train(ModelVariant::ObjSpatial, tr, va, cfg, dir / "run1");
  const auto r2 = train(ModelVariant::ObjSpatial, tr, va, cfg, dir / "run2");
  for (const char* f : {"history.jsonl", "best.ckpt", "last.ckpt", "lr_trace.csv", "config.json"}) {
    INFO(f);
    REQUIRE(std::filesystem::exists(dir / "run1" / f));
    CHECK(testutil::read_file(dir / "run1" / f) == testutil::read_file(dir / "run2" / f));
  }
  CHECK(flatten(r1.last) == flatten(r2.last));

  // Training never touches the input features.
  for (std::size_t i = 0; i < tr.size(); ++i) {
    CHECK(feature_record_to_json(tr[i]) == feature_record_to_json(train_copy[i]));
  }

  REQUIRE(r1.history.size() == 5);
  CHECK(r1.history[0].epoch == 0);
  CHECK_FALSE(r1.history[0].train_loss.has_value());
  double best = -1.0;
  int best_epoch = -1;
  for (std::size_t e = 1; e < r1.history.size(); ++e) {
    const auto& h = r1.history[e];
    CHECK(h.improved == (h.val_macro_f1 > best));
    if (h.val_macro_f1 > best) {
      best = h.val_macro_f1;
      best_epoch = h.epoch;
    }
    CHECK(h.train_loss.has_value());
  }
  CHECK(r1.best_epoch == best_epoch);
  const auto ck = load_checkpoint(dir / "run1" / "best.ckpt");
  CHECK(ck.epoch == best_epoch);
  CHECK(flatten(ck.params) == flatten(r1.best));
  CHECK(evaluate(ck.params, va).macro_f1 == best);

  REQUIRE(r1.lr_trace.size() == static_cast<std::size_t>(r1.history.back().iterations));
  for (std::size_t i = 0; i < r1.lr_trace.size(); ++i) {
    CHECK(r1.lr_trace[i] == triangular_lr(static_cast<std::int64_t>(i), cfg));
  }

  std::ifstream hist(dir / "run1" / "history.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(hist, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch").get<int>() == lines);
    ++lines;
  }
  CHECK(lines == 5);
}

TEST_CASE("train: a different seed gives a different run") {
  testutil::TempDir dir("train-seed");
  const FeatureSet fs = small_synthetic(dir, 90, 4);
  const auto [tr, va] = stratified_split(fs.records, 0.8, 1);
  TrainConfig a = quick_config();
  a.max_epochs = 1;
  TrainConfig b = a;
  b.seed = a.seed + 1;
  CHECK(flatten(train(ModelVariant::ObjNoSpatial, tr, va, a).last) !=
        flatten(train(ModelVariant::ObjNoSpatial, tr, va, b).last));
}

TEST_CASE("train: non-finite loss aborts with the iteration") {
  testutil::TempDir dir("train-nan");
  const FeatureSet fs = small_synthetic(dir, 60, 5);
  auto [tr, va] = stratified_split(fs.records, 0.8, 1);
  for (auto& r : tr) r.text_embedding[0] = std::nan("");
  try {
    train(ModelVariant::Baseline, tr, va, quick_config());
    FAIL("expected RuntimeFailure");
  } catch (const RuntimeFailure& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}

TEST_CASE("train: rejects empty classes and mismatched dims") {
  testutil::TempDir dir("train-bad");
  const FeatureSet fs = small_synthetic(dir, 60, 6);
  std::vector<FeatureRecord> no_neg;
  for (const auto& r : fs.records) {
    if (r.label != SentimentLabel::Negative) no_neg.push_back(r);
  }
  CHECK_THROWS_AS(train(ModelVariant::ObjSpatial, no_neg, fs.records, quick_config()), DataError);
  std::vector<FeatureRecord> broken = fs.records;
  broken[0].image_embedding = Vector::Zero(3);
  CHECK_THROWS_AS(train(ModelVariant::ObjSpatial, broken, fs.records, quick_config()), DataError);
}
