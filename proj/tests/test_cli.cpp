#include "doctest.h"

#include <cstdlib>
#include <initializer_list>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "json.hpp"
#include "memesent/cli.hpp"
#include "memesent/model.hpp"
#include "test_util.hpp"

using namespace memesent;

namespace {

struct CliResult {
  int code = 0;
  std::string err;
};

CliResult run(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"memesent"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  std::ostringstream err, out;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  return {code, err.str() + out.str()};
}

std::string str(const std::filesystem::path& p) { return p.string(); }

} // namespace

TEST_CASE("cli: synth, train, evaluate, compare") {
  testutil::TempDir dir("cli");
  const auto data = dir / "d";
  REQUIRE(run({"synth", "--out", str(data), "--n", "300", "--seed", "7", "--d-text", "16", "--d-visual", "16",
               "--d-face", "8"})
              .code == kExitOk);
  CHECK(std::filesystem::exists(data / "features.jsonl"));
  testutil::write_file(dir / "c.json", R"({"batch_size": 64, "max_epochs": 2, "patience": 5, "hidden_size": 8})");

  const auto r1 = run({"train", "--features", str(data / "features.jsonl"), "--variant", "obj-spatial", "--config",
                       str(dir / "c.json"), "--out", str(dir / "run1")});
  INFO(r1.err);
  REQUIRE(r1.code == kExitOk);
  for (const char* f : {"config.json", "history.jsonl", "best.ckpt", "last.ckpt", "lr_trace.csv"}) {
    CHECK(std::filesystem::exists(dir / "run1" / f));
  }

  // Re-running reproduces every artifact.
  REQUIRE(run({"train", "--features", str(data / "features.jsonl"), "--variant", "obj-spatial", "--config",
               str(dir / "c.json"), "--out", str(dir / "run1b")})
              .code == kExitOk);
  for (const char* f : {"config.json", "history.jsonl", "best.ckpt", "last.ckpt", "lr_trace.csv"}) {
    CHECK(testutil::read_file(dir / "run1" / f) == testutil::read_file(dir / "run1b" / f));
  }

  REQUIRE(run({"train", "--features", str(data / "features.jsonl"), "--variant", "obj-nospatial", "--config",
               str(dir / "c.json"), "--out", str(dir / "run2"), "--seed", "3"})
              .code == kExitOk);
  const auto history = nlohmann::json::parse(testutil::read_file(dir / "run2" / "config.json"));
  CHECK(history.at("config").at("seed") == 3);

  REQUIRE(run({"evaluate", "--run", str(dir / "run1"), "--features", str(data / "features.jsonl")}).code == kExitOk);
  REQUIRE(run({"evaluate", "--run", str(dir / "run1"), "--features", str(data / "features.jsonl"), "--report",
               str(dir / "again.json")})
              .code == kExitOk);
  CHECK(testutil::read_file(dir / "run1" / "report.json") == testutil::read_file(dir / "again.json"));
  REQUIRE(run({"evaluate", "--run", str(dir / "run2"), "--features", str(data / "features.jsonl"), "--checkpoint",
               "last"})
              .code == kExitOk);

  const auto cmp = run({"compare", "--run-a", str(dir / "run1"), "--run-b", str(dir / "run2"), "--out",
                        str(dir / "cmp")});
  INFO(cmp.err);
  REQUIRE(cmp.code == kExitOk);
  const auto cj = nlohmann::json::parse(testutil::read_file(dir / "cmp" / "compare.json"));
  CHECK(cj.contains("marker"));
  CHECK(testutil::read_file(dir / "cmp" / "compare.txt").find("F1-M") != std::string::npos);

  // Mismatched evaluation sets.
  REQUIRE(run({"synth", "--out", str(dir / "other"), "--n", "90", "--seed", "8", "--d-text", "16", "--d-visual",
               "16", "--d-face", "8"})
              .code == kExitOk);
  REQUIRE(run({"evaluate", "--run", str(dir / "run2"), "--features", str(dir / "other" / "features.jsonl")}).code ==
          kExitOk);
  const auto bad = run({"compare", "--run-a", str(dir / "run1"), "--run-b", str(dir / "run2")});
  CHECK(bad.code == kExitData);
}

TEST_CASE("cli: bogus variant lists the valid ones") {
  testutil::TempDir dir("cli-variant");
  REQUIRE(run({"synth", "--out", str(dir / "d"), "--n", "30", "--d-text", "8", "--d-visual", "8", "--d-face", "4"})
              .code == kExitOk);
  const auto r = run({"train", "--features", str(dir / "d" / "features.jsonl"), "--variant", "bogus", "--out",
                      str(dir / "run")});
  CHECK(r.code == kExitUsage);
  for (auto v : kAllVariants) CHECK(r.err.find(variant_name(v)) != std::string::npos);
}

TEST_CASE("cli: usage and data errors") {
  testutil::TempDir dir("cli-errors");
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"synth"}).code == kExitUsage);
  CHECK(run({"synth", "--out", str(dir / "x"), "--n", "2"}).code == kExitUsage);
  CHECK(run({"synth", "--out", str(dir / "x"), "--balance", "0.5,0.5"}).code == kExitUsage);
  CHECK(run({"train", "--features", str(dir / "missing.jsonl"), "--variant", "baseline", "--out", str(dir / "r")})
            .code == kExitData);
  testutil::write_file(dir / "bad.json", R"({"not_a_key": 1})");
  REQUIRE(run({"synth", "--out", str(dir / "d"), "--n", "30", "--d-text", "8", "--d-visual", "8", "--d-face", "4"})
              .code == kExitOk);
  CHECK(run({"train", "--features", str(dir / "d" / "features.jsonl"), "--variant", "baseline", "--config",
             str(dir / "bad.json"), "--out", str(dir / "r")})
            .code == kExitUsage);
  CHECK(run({"evaluate", "--run", str(dir / "nowhere"), "--features", str(dir / "d" / "features.jsonl")}).code ==
        kExitData);
}

TEST_CASE("cli: extract with stub and precomputed backends") {
  testutil::TempDir dir("cli-extract");
  const auto d = dir / "d";
  REQUIRE(run({"synth", "--out", str(d), "--n", "45", "--seed", "2", "--d-text", "8", "--d-visual", "8", "--d-face",
               "4"})
              .code == kExitOk);
  const auto stub = run({"extract", "--manifest", str(d / "manifest.jsonl"), "--backend", "stub", "--fixtures",
                         str(d / "fixtures.jsonl"), "--out", str(dir / "stub.jsonl"), "--d-text", "8", "--d-visual",
                         "8", "--d-face", "4"});
  INFO(stub.err);
  REQUIRE(stub.code == kExitOk);
  CHECK(testutil::read_file(dir / "stub.jsonl") == testutil::read_file(d / "features.jsonl"));

  const auto pre = run({"extract", "--manifest", str(d / "manifest.jsonl"), "--backend", "precomputed",
                        "--fixtures", str(dir / "stub.jsonl"), "--out", str(dir / "pre.jsonl")});
  INFO(pre.err);
  REQUIRE(pre.code == kExitOk);
  CHECK(testutil::read_file(dir / "pre.jsonl") == testutil::read_file(dir / "stub.jsonl"));

  CHECK(run({"extract", "--manifest", str(d / "manifest.jsonl"), "--backend", "gpu", "--fixtures",
             str(d / "fixtures.jsonl"), "--out", str(dir / "x.jsonl")})
            .code == kExitUsage);
}

TEST_CASE("cli: the installed binary reports exit codes") {
  const std::string bin = MEMESENT_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("'" + bin + "' --help") == 0);
  CHECK(status("'" + bin + "' train --features x --variant bogus --out y") == 1);
}
