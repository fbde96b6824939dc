#include "doctest.h"

#include <array>
#include <string>
#include <vector>

#include "memesent/error.hpp"
#include "memesent/evaluation.hpp"
#include "memesent/rng.hpp"
#include "oracles.hpp"

using namespace memesent;

namespace {

std::pair<std::vector<int>, std::vector<int>> random_pairs(Rng& rng, std::size_t n) {
  std::vector<int> y(n), p(n);
  // Vary the skew so some cases have empty classes.
  const double skew = rng.uniform();
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform() < skew ? 0 : static_cast<int>(rng.below(3));
    p[i] = rng.uniform() < 0.5 ? y[i] : static_cast<int>(rng.below(3));
  }
  return {y, p};
}

EvalReport report_with(double weighted, double macro, std::int64_t n = 600, std::string fp = "abc") {
  EvalReport r;
  r.variant = "x";
  r.dataset_fingerprint = std::move(fp);
  r.sample_count = n;
  r.weighted_f1 = weighted;
  r.macro_f1 = macro;
  return r;
}

} // namespace

TEST_CASE("confusion_matrix examples") {
  const auto id = confusion_matrix(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 2});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) CHECK(id[r][c] == (r == c ? 1 : 0));
  }
  const auto one = confusion_matrix(std::vector<int>{0, 0}, std::vector<int>{1, 1});
  CHECK(one[0][1] == 2);
  std::int64_t total = 0;
  for (const auto& row : one) {
    for (auto v : row) total += v;
  }
  CHECK(total == 2);
  const auto empty = confusion_matrix(std::vector<int>{}, std::vector<int>{});
  for (const auto& row : empty) {
    for (auto v : row) CHECK(v == 0);
  }
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}), DataError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{3}, std::vector<int>{0}), DataError);
}

TEST_CASE("F1 examples") {
  const auto perfect = confusion_matrix(std::vector<int>{0, 1, 2, 2}, std::vector<int>{0, 1, 2, 2});
  CHECK(macro_f1(perfect) == 1.0);
  CHECK(weighted_f1(perfect) == 1.0);

  const auto m = confusion_matrix(std::vector<int>{0, 1, 2}, std::vector<int>{0, 0, 0});
  const auto pc = per_class_metrics(m);
  CHECK(pc[0].f1 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pc[1].f1 == 0.0);
  CHECK(pc[2].f1 == 0.0);
  CHECK(macro_f1(m) == 1.0 / 6.0);
  CHECK(weighted_f1(m) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  const ConfusionMatrix zero{};
  CHECK(macro_f1(zero) == 0.0);
  CHECK(weighted_f1(zero) == 0.0);
}

TEST_CASE("F1 agrees with the brute-force oracle") {
  Rng rng(2024);
  for (int n = 0; n < 200; ++n) {
    const auto [y, p] = random_pairs(rng, rng.below(60));
    const auto m = confusion_matrix(y, p);
    const auto [macro, weighted] = oracle::brute_force_f1(y, p);
    CHECK(std::abs(macro_f1(m) - macro) <= 1e-9);
    CHECK(std::abs(weighted_f1(m) - weighted) <= 1e-9);
    CHECK(macro_f1(m) >= 0.0);
    CHECK(macro_f1(m) <= 1.0);
    CHECK(weighted_f1(m) >= 0.0);
    CHECK(weighted_f1(m) <= 1.0);
    std::int64_t total = 0;
    for (const auto& row : m) {
      for (auto v : row) total += v;
    }
    CHECK(total == static_cast<std::int64_t>(y.size()));
  }
}

TEST_CASE("F1 is invariant to relabelling classes") {
  Rng rng(5);
  const std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int n = 0; n < 100; ++n) {
    auto [y, p] = random_pairs(rng, 1 + rng.below(40));
    const auto base = confusion_matrix(y, p);
    for (const auto& perm : perms) {
      std::vector<int> y2, p2;
      for (std::size_t i = 0; i < y.size(); ++i) {
        y2.push_back(perm[y[i]]);
        p2.push_back(perm[p[i]]);
      }
      const auto m = confusion_matrix(y2, p2);
      CHECK(macro_f1(m) == doctest::Approx(macro_f1(base)).epsilon(1e-12));
      CHECK(weighted_f1(m) == doctest::Approx(weighted_f1(base)).epsilon(1e-12));
    }
  }
}

TEST_CASE("equal supports make macro and weighted coincide") {
  Rng rng(6);
  for (int n = 0; n < 100; ++n) {
    const std::size_t k = 1 + rng.below(15);
    std::vector<int> y, p;
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < k; ++i) {
        y.push_back(c);
        p.push_back(static_cast<int>(rng.below(3)));
      }
    }
    const auto m = confusion_matrix(y, p);
    CHECK(macro_f1(m) == doctest::Approx(weighted_f1(m)).epsilon(1e-12));
  }
}

TEST_CASE("constant predictor") {
  Rng rng(7);
  for (int n = 0; n < 100; ++n) {
    std::vector<int> y;
    const std::size_t len = 1 + rng.below(50);
    for (std::size_t i = 0; i < len; ++i) y.push_back(static_cast<int>(rng.below(3)));
    const int c = static_cast<int>(rng.below(3));
    const std::vector<int> p(len, c);
    const auto m = confusion_matrix(y, p);
    const auto pc = per_class_metrics(m);
    const double support = static_cast<double>(pc[c].support);
    CHECK(weighted_f1(m) == doctest::Approx(support * pc[c].f1 / static_cast<double>(len)).epsilon(1e-12));
    CHECK(macro_f1(m) == doctest::Approx(pc[c].f1 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("report JSON round-trip and key order") {
  const auto m = confusion_matrix(std::vector<int>{0, 1, 2, 1}, std::vector<int>{0, 2, 2, 1});
  EvalReport r = make_report(m);
  r.variant = "obj-spatial";
  r.dataset_fingerprint = "0123456789abcdef";
  const auto j = report_to_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"variant", "dataset_fingerprint", "sample_count", "confusion", "per_class",
                                         "macro_f1", "weighted_f1"});
  const auto back = report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(report_to_json(back).dump() == j.dump());
  CHECK(back.sample_count == 4);
}

TEST_CASE("evaluate is deterministic and handles degenerate records") {
  ModelConfig cfg;
  cfg.dims = {6, 6, 4};
  cfg.hidden_size = 3;
  Rng rng(8);
  const PadVectors pads{oracle::random_matrix(rng, 6, 1), oracle::random_matrix(rng, 6, 1)};
  std::vector<FeatureRecord> recs;
  for (int i = 0; i < 20; ++i) recs.push_back(oracle::random_record(cfg.dims, pads, 1 + i % 5, 1 + i % 3, i % 2, rng));
  // A record whose co-attention inputs are all pads except one item.
  recs.push_back(oracle::random_record(cfg.dims, pads, 1, 1, 0, rng));
  for (auto v : kAllVariants) {
    ModelParams p = init_params(v, cfg, 2);
    oracle::randomize(p, 3, 0.3);
    const auto a = report_to_json(evaluate(p, recs)).dump();
    const auto b = report_to_json(evaluate(p, recs)).dump();
    CHECK(a == b);
    const auto r = evaluate(p, recs);
    CHECK(r.sample_count == 21);
    CHECK(r.variant == variant_name(v));
    CHECK(r.dataset_fingerprint == dataset_fingerprint(recs));
  }
  std::vector<FeatureRecord> reordered(recs.rbegin(), recs.rend());
  CHECK(dataset_fingerprint(reordered) != dataset_fingerprint(recs));
  CHECK(dataset_fingerprint(recs).size() == 16);
}

TEST_CASE("compare: direction markers") {
  const auto c = compare(report_with(0.489, 0.336), report_with(0.481, 0.317));
  REQUIRE(c.rows.size() == 2);
  CHECK(c.rows[0].metric == "F1-W");
  CHECK(c.rows[1].metric == "F1-M");
  CHECK(c.rows[0].delta == doctest::Approx(0.008).epsilon(1e-9));
  CHECK(c.rows[1].delta == doctest::Approx(0.019).epsilon(1e-9));
  CHECK(c.marker == "↑");

  const auto same = compare(report_with(0.4, 0.3), report_with(0.4, 0.3));
  CHECK(same.rows[0].delta == 0.0);
  CHECK(same.rows[1].delta == 0.0);
  CHECK(same.marker == "=");

  CHECK(compare(report_with(0.50, 0.30), report_with(0.48, 0.31)).marker == "↑↓");
  CHECK(compare(report_with(0.40, 0.30), report_with(0.48, 0.31)).marker == "↓");
  CHECK(direction_marker(0.0, 0.1) == "↑");

  const auto text = comparison_to_text(c);
  CHECK(text.find("F1-W") != std::string::npos);
  CHECK(text.find("0.489") != std::string::npos);
  const auto j = comparison_to_json(c);
  CHECK(j.at("marker") == "↑");
}

TEST_CASE("compare rejects different test sets") {
  CHECK_THROWS_AS(compare(report_with(0.4, 0.3, 600), report_with(0.4, 0.3, 599)), DataError);
  CHECK_THROWS_AS(compare(report_with(0.4, 0.3, 600, "aaa"), report_with(0.4, 0.3, 600, "bbb")), DataError);
}
