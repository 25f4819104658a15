/* Copyright 2026 The provgad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "provgad/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    const fs::path p = fs::temp_directory_path() / "provgad_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string path(const std::string& name) { return (root() / name).string(); }

// Runs the CLI with output captured to files; returns the exit code.
int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(PROVGAD_CLI) + " " + args + " >" + path("stdout.txt") +
                          " 2>" + path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const std::string& p) { return json::parse(slurp(p)); }

json without_timing(json doc) {
  doc.erase("timing");
  return doc;
}

const char* kSmall = "--scenarios 3 --graphs-per-scenario 12 --min-nodes 20 --max-nodes 30 --min-fanout 10 --max-fanout 15";

// Benign training corpus, attack target corpus and a config file.
void prepare() {
  static bool done = false;
  if (done) return;
  done = true;
  REQUIRE(run(std::string("synth --seed 3 --benign-only ") + kSmall + " --out " + path("train")) == 0);
  REQUIRE(run(std::string("synth --seed 3 --attack 2 ") + kSmall + " --out " + path("target")) == 0);
  std::ofstream(path("c.json")) << R"({"granularity":"batched","d":8,"layers":1,"epochs":2,"k":3,"target_fpr":0.1})";
}

std::string common(const std::string& artifacts = "art") {
  return " --config " + path("c.json") + " --artifacts " + path(artifacts) + " --train-logs " + path("train/corpus.tsv") +
         " --target-logs " + path("target/corpus.tsv") + " --labels " + path("target/labels.jsonl");
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(slurp(path("stdout.txt")).find("synth") != std::string::npos);
  CHECK(run("train --help") == 0);
  CHECK(run("train --no-such-flag") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("synth --benign-only --attack 1 --out " + path("x")) == 1);
}

TEST_CASE("detect without artifacts exits 2") {
  prepare();
  CHECK(run("detect --artifacts " + path("nothing") + " --target-logs " + path("target/corpus.tsv") + " --theta 1") == 2);
  CHECK(slurp(path("stderr.txt")).find("run train first") != std::string::npos);
}

TEST_CASE("invalid configuration exits 1") {
  prepare();
  std::ofstream(path("bad.json")) << R"({"theta":1.0,"target_fpr":0.1})";
  CHECK(run("train --config " + path("bad.json") + " --train-logs " + path("train/corpus.tsv") + " --artifacts " +
            path("bad_art")) == 1);
  CHECK(run("train --mask-rate 1.5 --train-logs " + path("train/corpus.tsv") + " --artifacts " + path("bad_art")) == 1);
  std::ofstream(path("broken.tsv")) << "1\ta\t2\n";
  CHECK(run("train --theta 1 --dim 4 --train-logs " + path("broken.tsv") + " --artifacts " + path("bad_art")) == 1);
}

TEST_CASE("synth, train and detect end to end") {
  prepare();
  const std::string train_before = slurp(path("train/corpus.tsv"));
  const std::string target_before = slurp(path("target/corpus.tsv"));

  REQUIRE(run("train" + common()) == 0);
  for (const char* f : {"vocab.json", "checkpoint.json", "detector.json", "memory.jsonl", "training.json"})
    CHECK(fs::exists(root() / "art" / f));

  REQUIRE(run("detect" + common() + " --report " + path("report.json")) == 0);
  const json report = load(path("report.json"));
  CHECK(report["targets"].size() == 36);
  CHECK(!report["metrics"]["auc"].is_null());
  CHECK(report["config_hash"] == provgad::to_hex(provgad::xxh64(report["config"].dump())));
  CHECK(report.contains("tool_version"));
  CHECK(slurp(path("stdout.txt")).find("malicious") != std::string::npos);

  // Identical invocations give identical reports apart from timing.
  REQUIRE(run("detect" + common() + " --report " + path("report.json")) == 0);
  CHECK(without_timing(load(path("report.json"))) == without_timing(report));

  // eval recomputes metrics from the report.
  REQUIRE(run("eval --report " + path("report.json") + " --labels " + path("target/labels.jsonl") + " --out " +
              path("eval.json")) == 0);
  CHECK(load(path("eval.json"))["auc"] == report["metrics"]["auc"]);

  CHECK(slurp(path("train/corpus.tsv")) == train_before);
  CHECK(slurp(path("target/corpus.tsv")) == target_before);
}

TEST_CASE("flags override config and the seed environment variable") {
  prepare();
  const std::string base = " --config " + path("c.json") + " --train-logs " + path("train/corpus.tsv");
  REQUIRE(run("train" + base + " --artifacts " + path("env_art"), "PROVGAD_SEED=9") == 0);
  const json env_cfg = load(path("env_art/training.json"))["config"];
  CHECK(env_cfg["seed"] == 9);
  CHECK(env_cfg["k"] == 3);
  REQUIRE(run("train" + base + " --seed 5 --k 4 --artifacts " + path("flag_art"), "PROVGAD_SEED=9") == 0);
  const json flag_cfg = load(path("flag_art/training.json"))["config"];
  CHECK(flag_cfg["seed"] == 5);
  CHECK(flag_cfg["k"] == 4);
  CHECK(flag_cfg["d"] == 8);
}

TEST_CASE("threshold and adapt") {
  prepare();
  REQUIRE(run("train" + common("art2")) == 0);
  const double before = load(path("art2/detector.json"))["theta"].get<double>();
  REQUIRE(run("threshold --artifacts " + path("art2") + " --benign-logs " + path("train/corpus.tsv") +
              " --target-fpr 0.5") == 0);
  const double after = load(path("art2/detector.json"))["theta"].get<double>();
  CHECK(after != before);

  const std::string feedback = " --artifacts " + path("art2") + " --feedback-logs " + path("target/corpus.tsv") +
                               " --feedback-labels " + path("target/labels.jsonl");
  const std::string snapshot = slurp(path("art2/detector.json"));
  CHECK(run("adapt" + feedback) == 1);
  CHECK(slurp(path("art2/detector.json")) == snapshot);

  REQUIRE(run("adapt --artifacts " + path("art2") + " --feedback-logs " + path("train/corpus.tsv") +
              " --feedback-labels " + path("train/labels.jsonl")) == 0);
  CHECK(slurp(path("art2/detector.json")) != snapshot);
}

TEST_CASE("ingest and perturb write their outputs") {
  prepare();
  REQUIRE(run("ingest --logs " + path("target/corpus.tsv") + " --out " + path("graphs.jsonl")) == 0);
  std::ifstream in(path("graphs.jsonl"));
  std::string line;
  std::size_t graphs = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json g = json::parse(line);
    CHECK(g.contains("batch"));
    ++graphs;
  }
  CHECK(graphs == 36);

  REQUIRE(run("perturb --logs " + path("target/corpus.tsv") + " --entity-labels " + path("target/entity_labels.jsonl") +
              " --strategy MFE --out " + path("mfe")) == 0);
  for (const char* f : {"corpus.tsv", "labels.jsonl", "entity_labels.jsonl"}) CHECK(fs::exists(root() / "mfe" / f));
  CHECK(run("perturb --logs " + path("target/corpus.tsv") + " --entity-labels " + path("target/entity_labels.jsonl") +
            " --strategy NOPE --out " + path("nope")) == 1);
}

TEST_CASE("bench on an empty corpus") {
  std::ofstream(path("empty.tsv")) << "";
  REQUIRE(run("bench --corpus " + path("empty.tsv") + " --out " + path("bench.json")) == 0);
  const json b = load(path("bench.json"));
  for (const char* phase : {"construction", "training", "embedding", "detection"}) {
    INFO(phase);
    CHECK(b["phases"][phase]["seconds"] == 0.0);
  }
}
