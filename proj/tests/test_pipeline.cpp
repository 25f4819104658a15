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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "provgad/error.hpp"
#include "provgad/harness.hpp"
#include "provgad/pipeline.hpp"

using namespace provgad;
using namespace provgad::pipeline;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  harness::Corpus corpus;
  std::vector<RawEvent> events;

  explicit Fixture(std::size_t scenarios, std::size_t per_scenario, std::vector<std::size_t> attacks = {},
                   std::uint64_t seed = 1) {
    harness::ScenarioSpec spec;
    spec.scenarios = scenarios;
    spec.graphs_per_scenario = per_scenario;
    spec.min_nodes = 15;
    spec.max_nodes = 25;
    spec.min_fanout = 10;
    spec.max_fanout = 15;
    spec.attack_scenarios = std::move(attacks);
    spec.seed = seed;
    corpus = harness::gen_corpus(spec);
    events = parse_lines(corpus.lines, LogFormat::kStreamSpot);
  }

  template <typename Pred>
  std::vector<RawEvent> select(Pred keep) const {
    std::set<std::string> ids;
    for (const auto& g : corpus.graphs)
      if (keep(g)) ids.insert(g.batch_id);
    std::vector<RawEvent> out;
    for (const auto& e : events)
      if (ids.count(e.batch_id)) out.push_back(e);
    return out;
  }

  LabelMap labels() const { return parse_labels(corpus.batch_label_lines()); }
};

PipelineConfig small_config(Granularity g) {
  PipelineConfig cfg;
  cfg.granularity = g;
  cfg.train = PipelineConfig::default_train(g);
  cfg.train.d = 8;
  cfg.train.layers = 1;
  cfg.train.epochs = 2;
  cfg.train.seed = 4;
  cfg.k = 3;
  cfg.theta = 1.5;
  cfg.target_fpr.reset();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& f : fs::directory_iterator(dir)) out[f.path().filename().string()] = slurp(f.path());
  return out;
}

// Distance from each graph's detector points to the nearest memorized point.
std::vector<double> nearest(const Artifacts& a, const std::vector<RawEvent>& events) {
  Vocabulary vocab = a.vocab;
  std::vector<double> out;
  for (const auto& g : build_graphs(events, vocab)) {
    const GraphPoints gp = select_points(g, gmae::embed(g, a.params), a.config.granularity);
    for (std::size_t r = 0; r < gp.points.rows(); ++r) out.push_back(detect::knn(a.detector, gp.points.row(r), 1)[0].distance);
  }
  return out;
}

// Score oracle: mean of the k nearest memorized distances over dist_bar.
double score_oracle(const Artifacts& a, std::span<const double> q) {
  double s = 0.0;
  for (const auto& n : detect::knn(a.detector, q, a.config.k)) s += n.distance;
  return s / static_cast<double>(a.config.k) / a.detector.dist_bar();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("provgad_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config resolution") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.target_fpr == 0.01);
  CHECK(c.train.d == default_dim(Granularity::kBatched));
  CHECK(PipelineConfig::from_json({{"granularity", "entity"}}).train.d == 64);
  CHECK(PipelineConfig::from_json({{"granularity", "batched"}}).train.d == 256);

  const PipelineConfig t = PipelineConfig::from_json({{"theta", 2.0}});
  CHECK(t.theta == 2.0);
  CHECK(!t.target_fpr);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"theta", 2.0}, {"target_fpr", 0.1}}), ValidationError);
  c.theta = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.target_fpr.reset();
  CHECK_NOTHROW(c.validate());
  c.capacity = c.k;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::array()), SchemaError);

  PipelineConfig e = small_config(Granularity::kEntity);
  e.capacity = 50;
  e.report = "r.json";
  CHECK(PipelineConfig::from_json(e.to_json()).to_json() == e.to_json());
  CHECK_THROWS_AS(parse_granularity("per-host"), ValidationError);
}

TEST_CASE("labels files") {
  const LabelMap m = parse_labels({R"({"target":"a","label":"malicious"})", "", R"({"target":"b","label":"benign"})"});
  CHECK(m.size() == 2);
  CHECK(m.at("a"));
  CHECK(!m.at("b"));
  CHECK_THROWS_AS(parse_labels({R"({"target":"a","label":"evil"})"}), ValidationError);
  CHECK_THROWS_AS(load_labels("/nonexistent/labels.jsonl"), MissingArtifactError);
}

TEST_CASE("batched mode memorizes one point per graph") {
  Fixture fx(2, 50);
  std::vector<std::string> stages;
  PipelineHooks hooks{[&](std::string_view s) { stages.emplace_back(s); }};
  const Artifacts a = train_artifacts(small_config(Granularity::kBatched), fx.events, hooks);
  CHECK(a.detector.size() == 100);
  CHECK(a.detector.dim() == 16);
  CHECK(a.memory.size() == 100);
  CHECK(a.detector.theta() == 1.5);

  // A memorized graph finds itself at distance zero; its score is the kNN mean.
  const auto first = fx.select([&](const harness::GraphRecord& g) { return g.batch_id == fx.corpus.graphs[0].batch_id; });
  const DetectionReport r = detect_events(a, first);
  REQUIRE(r.targets.size() == 1);
  CHECK(nearest(a, first) == std::vector<double>{0.0});
  const auto h = gmae::embed(a.memory[0], a.params);
  CHECK(r.targets[0].score == doctest::Approx(score_oracle(a, h.state)).epsilon(1e-12));

  // All-benign labels: FPR 0 above the max score, AUC undefined.
  const LabelMap labels = fx.labels();
  const DetectionReport all = detect_events(a, fx.events, &labels, 1e6);
  REQUIRE(all.metrics);
  CHECK(all.metrics->fpr == 0.0);
  CHECK(!all.metrics->auc);
  CHECK(all.to_json()["metrics"]["auc"].is_null());
  CHECK(all.theta == 1e6);

  // Same code path for entity mode; only the point selection differs.
  std::vector<std::string> entity_stages;
  PipelineHooks ehooks{[&](std::string_view s) { entity_stages.emplace_back(s); }};
  train_artifacts(small_config(Granularity::kEntity), fx.events, ehooks);
  REQUIRE(stages.size() == entity_stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].rfind("select_points", 0) == 0) {
      CHECK(stages[i] == "select_points:state");
      CHECK(entity_stages[i] == "select_points:node");
    } else {
      CHECK(stages[i] == entity_stages[i]);
    }
  }
  CHECK(std::count(stages.begin(), stages.end(), "train") == 1);
}

TEST_CASE("entity mode memorizes one point per node") {
  Fixture fx(1, 8);
  const Artifacts a = train_artifacts(small_config(Granularity::kEntity), fx.events);
  CHECK(a.detector.size() == fx.corpus.node_count());
  const auto labels = parse_labels(fx.corpus.entity_label_lines());
  const DetectionReport r = detect_events(a, fx.events, &labels);
  CHECK(r.targets.size() == fx.corpus.node_count());
  for (double d : nearest(a, fx.events)) CHECK(d == 0.0);
  CHECK(r.targets[0].id == fx.corpus.graphs[0].batch_id + "/" + fx.corpus.graphs[0].node_uids[0]);
}

TEST_CASE("select_points") {
  Fixture fx(1, 1);
  Vocabulary vocab(4, 1);
  const auto graphs = build_graphs(fx.events, vocab);
  const auto params = gmae::ModelParams::init(4, 1, 1);
  const auto h = gmae::embed(graphs[0], params);
  const GraphPoints b = select_points(graphs[0], h, Granularity::kBatched);
  CHECK(b.points.rows() == 1);
  CHECK(std::equal(h.state.begin(), h.state.end(), b.points.row(0).begin()));
  CHECK(b.ids == std::vector<std::string>{graphs[0].batch_id});
  const GraphPoints e = select_points(graphs[0], h, Granularity::kEntity);
  CHECK(e.points == h.node);
  CHECK(e.ids.size() == graphs[0].num_nodes());
  CHECK(e.ids[2] == graphs[0].batch_id + "/" + graphs[0].node_uids[2]);
}

TEST_CASE("batched mode refuses too few graphs") {
  Fixture fx(1, 3);
  CHECK_THROWS_AS(train_artifacts(small_config(Granularity::kBatched), fx.events), ValidationError);
}

TEST_CASE("theta from a held-out benign share") {
  Fixture fx(2, 25);
  PipelineConfig cfg = small_config(Granularity::kBatched);
  cfg.theta.reset();
  cfg.target_fpr = 0.1;
  cfg.holdout_fraction = 0.2;
  const Artifacts a = train_artifacts(cfg, fx.events);
  CHECK(a.holdout_batches.size() == 10);
  CHECK(a.detector.size() == 40);
  REQUIRE(a.detector.theta());
  std::set<std::string> held(a.holdout_batches.begin(), a.holdout_batches.end());
  const auto held_events = fx.select([&](const harness::GraphRecord& g) { return held.count(g.batch_id) > 0; });
  const auto scores = score_events(a, held_events);
  CHECK(*a.detector.theta() == detect::select_threshold(scores, 0.1));
  for (const auto& g : a.memory) CHECK(held.count(g.batch_id) == 0);
}

TEST_CASE("detection needs labels for every target") {
  Fixture fx(1, 6);
  PipelineConfig cfg = small_config(Granularity::kBatched);
  const Artifacts a = train_artifacts(cfg, fx.events);
  LabelMap partial = fx.labels();
  partial.erase(fx.corpus.graphs[2].batch_id);
  CHECK_THROWS_AS(detect_events(a, fx.events, &partial), ValidationError);
}

TEST_CASE("training is reproducible and detection leaves artifacts untouched") {
  Fixture fx(2, 10);
  const fs::path root = scratch("repro");
  std::ofstream(root / "train.tsv") << [&] {
    std::string s;
    for (const auto& l : fx.corpus.lines) s += l + "\n";
    return s;
  }();
  {
    std::ofstream lab(root / "labels.jsonl");
    for (const auto& l : fx.corpus.batch_label_lines()) lab << l << "\n";
  }
  PipelineConfig cfg = small_config(Granularity::kBatched);
  cfg.train_logs = (root / "train.tsv").string();
  cfg.target_logs = cfg.train_logs;
  cfg.labels = (root / "labels.jsonl").string();
  cfg.artifacts = (root / "a1").string();
  cfg.report = (root / "report.json").string();
  run_training(cfg);
  const auto a1 = dir_contents(root / "a1");
  CHECK(a1.size() == 5);
  run_training(cfg);
  CHECK(dir_contents(root / "a1") == a1);

  const DetectionReport r = run_detection(cfg);
  CHECK(dir_contents(root / "a1") == a1);
  CHECK(r.targets.size() == 20);
  const nlohmann::json doc = read_json(cfg.report);
  CHECK(doc["tool_version"] == std::string(kToolVersion));
  CHECK(doc["config_hash"] == config_hash(doc["config"]));
  CHECK(doc["targets"].size() == 20);

  CHECK_THROWS_AS(load_artifacts((root / "missing").string()), MissingArtifactError);
  fs::remove_all(root);
}

TEST_CASE("adaption") {
  Fixture fx(3, 12);
  const auto old_events = fx.select([](const harness::GraphRecord& g) { return g.scenario < 2; });
  const auto drift = fx.select([](const harness::GraphRecord& g) { return g.scenario == 2; });
  PipelineConfig cfg = small_config(Granularity::kBatched);
  cfg.adapt_epochs = 2;
  const Artifacts a = train_artifacts(cfg, old_events);

  SUBCASE("empty feedback is a no-op") {
    const Artifacts same = adapt_artifacts(a, {});
    CHECK(same.params == a.params);
    CHECK(same.detector.to_json() == a.detector.to_json());
  }
  SUBCASE("malicious feedback is refused") {
    LabelMap labels;
    for (const auto& g : fx.corpus.graphs) labels[g.batch_id] = g.scenario == 2;
    CHECK_THROWS_AS(adapt_artifacts(a, drift, &labels), ValidationError);
  }
  SUBCASE("feedback scores drop") {
    std::vector<std::string> ids;
    const auto before = score_events(a, drift, &ids);
    const Artifacts b = adapt_artifacts(a, drift);
    const auto after = score_events(b, drift);
    CHECK(b.detector.size() == a.detector.size() + 12);
    CHECK(b.detector.theta() == a.detector.theta());
    for (std::size_t i = 0; i < before.size(); ++i) {
      INFO(ids[i]);
      CHECK(after[i] < before[i]);
    }
  }
  SUBCASE("capacity keeps the newest points") {
    Artifacts capped = a;
    capped.config.capacity = 10;
    const Artifacts b = adapt_artifacts(capped, drift);
    CHECK(b.detector.size() == 10);
    std::size_t memorized = 0;
    for (double d : nearest(b, drift)) memorized += d == 0.0;
    CHECK(memorized == 10);
    CHECK(b.memory.size() - b.memory_offset == 10);
  }
}
