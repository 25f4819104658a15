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

#include "provgad/cli.hpp"

#include <sys/resource.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "provgad/error.hpp"
#include "provgad/harness.hpp"
#include "provgad/hash.hpp"
#include "provgad/pipeline.hpp"

namespace provgad::cli {

using nlohmann::json;
namespace fs = std::filesystem;
namespace pl = provgad::pipeline;

namespace {

// Flags that overlay the config file. Unset flags leave the file (or the
// built-in default) in place.
struct Overrides {
  std::string config;
  std::optional<std::string> granularity, format, train_logs, target_logs, labels, feedback_logs,
      feedback_labels, artifacts, report;
  std::optional<std::size_t> d, layers, epochs, k, capacity, adapt_epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta, target_fpr, mask_rate, gamma, lr, holdout_fraction;
  std::optional<unsigned> threads;
  int verbose = 0;
};

void add_config_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--granularity", o.granularity, "batched or entity");
  sub->add_option("--format", o.format, "log format: streamspot or jsonl");
  sub->add_option("--threads", o.threads, "worker threads for parse/embed/score");
  sub->add_option("--dim", o.d, "embedding width d");
  sub->add_option("--layers", o.layers, "encoder layers");
  sub->add_option("--epochs", o.epochs, "training epochs");
  sub->add_option("--mask-rate", o.mask_rate, "masked node fraction");
  sub->add_option("--gamma", o.gamma, "feature loss exponent");
  sub->add_option("--lr", o.lr, "learning rate");
  sub->add_option("--seed", o.seed, "rng seed");
  sub->add_option("--k", o.k, "neighbours per query");
  sub->add_option("--theta", o.theta, "detection threshold");
  sub->add_option("--target-fpr", o.target_fpr, "select theta at this benign FPR");
  sub->add_option("--holdout-fraction", o.holdout_fraction, "benign graphs held out for theta");
  sub->add_option("--capacity", o.capacity, "detector memory capacity");
  sub->add_option("--adapt-epochs", o.adapt_epochs, "epochs of adaption training");
  sub->add_option("--train-logs", o.train_logs, "benign training logs");
  sub->add_option("--target-logs", o.target_logs, "logs to score");
  sub->add_option("--labels", o.labels, "labels JSONL for the target logs");
  sub->add_option("--feedback-logs", o.feedback_logs, "confirmed-benign feedback logs");
  sub->add_option("--feedback-labels", o.feedback_labels, "labels JSONL for the feedback logs");
  sub->add_option("--artifacts", o.artifacts, "artifact directory");
  sub->add_option("--report", o.report, "report output path");
  sub->add_flag("-v,--verbose", o.verbose, "log stages to standard error");
}

template <typename T>
void put(json& doc, const char* key, const std::optional<T>& v) {
  if (v) doc[key] = *v;
}

pl::PipelineConfig effective_config(const Overrides& o) {
  json doc = json::object();
  if (!o.config.empty()) doc = pl::read_json(o.config);
  if (!doc.is_object()) throw SchemaError("config must be a JSON object");
  if (const char* env = std::getenv("PROVGAD_SEED"); env && *env) {
    char* end = nullptr;
    const auto seed = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ValidationError("PROVGAD_SEED must be an unsigned integer");
    doc["seed"] = seed;
  }
  put(doc, "granularity", o.granularity);
  put(doc, "format", o.format);
  put(doc, "threads", o.threads);
  put(doc, "d", o.d);
  put(doc, "layers", o.layers);
  put(doc, "epochs", o.epochs);
  put(doc, "mask_rate", o.mask_rate);
  put(doc, "gamma", o.gamma);
  put(doc, "lr", o.lr);
  put(doc, "seed", o.seed);
  put(doc, "k", o.k);
  put(doc, "holdout_fraction", o.holdout_fraction);
  put(doc, "capacity", o.capacity);
  put(doc, "adapt_epochs", o.adapt_epochs);
  put(doc, "train_logs", o.train_logs);
  put(doc, "target_logs", o.target_logs);
  put(doc, "labels", o.labels);
  put(doc, "feedback_logs", o.feedback_logs);
  put(doc, "feedback_labels", o.feedback_labels);
  put(doc, "artifacts", o.artifacts);
  put(doc, "report", o.report);
  if (o.theta) {
    doc["theta"] = *o.theta;
    doc.erase("target_fpr");
  }
  if (o.target_fpr) {
    doc["target_fpr"] = *o.target_fpr;
    doc.erase("theta");
  }
  auto cfg = pl::PipelineConfig::from_json(doc);
  cfg.validate();
  return cfg;
}

pl::PipelineHooks hooks_for(const Overrides& o) {
  pl::PipelineHooks h;
  if (o.verbose > 0) h.on_stage = [](std::string_view s) { std::cerr << "stage: " << s << '\n'; };
  return h;
}

std::vector<RawEvent> read_events(const std::string& path, const pl::PipelineConfig& cfg) {
  if (path.empty()) throw ValidationError("no log file given");
  return parse_file(path, cfg.format, cfg.threads);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

long peak_rss_kb() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return usage.ru_maxrss;
}

// ---- subcommands ----

int cmd_ingest(const Overrides& o, const std::string& logs, const std::string& out) {
  const auto cfg = effective_config(o);
  auto events = read_events(logs, cfg);
  Vocabulary vocab(cfg.train.d, cfg.train.seed);
  std::size_t edges_before = 0;
  std::size_t edges_after = 0;
  std::size_t nodes = 0;
  std::vector<std::string> store;
  const std::size_t n_events = events.size();
  for (auto& batch : group_by_batch(std::move(events))) {
    const auto mg = build_multigraph(batch.events);
    const auto g = reduce_noise(mg, vocab);
    edges_before += mg.edges.size();
    edges_after += g.num_edges();
    nodes += g.num_nodes();
    store.push_back(graph_to_json(g).dump());
  }
  if (!out.empty()) write_lines(out, store);
  json summary = {{"events", n_events},
                  {"graphs", store.size()},
                  {"nodes", nodes},
                  {"edges_before", edges_before},
                  {"edges_after", edges_after},
                  {"edge_reduction_ratio",
                   edges_before ? 1.0 - static_cast<double>(edges_after) / static_cast<double>(edges_before)
                                : 0.0}};
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_train(const Overrides& o) {
  const auto cfg = effective_config(o);
  if (cfg.train_logs.empty()) throw ValidationError("train needs --train-logs or train_logs in the config");
  auto events = read_events(cfg.train_logs, cfg);
  const auto art = pl::train_artifacts(cfg, std::move(events), hooks_for(o));
  pl::save_artifacts(art, cfg.artifacts);
  std::cerr << "trained on " << art.memory.size() << " graphs, detector holds " << art.detector.size()
            << " points, theta=" << art.detector.theta().value_or(0.0) << '\n';
  return 0;
}

int cmd_detect(const Overrides& o, bool two_stage, const std::string& entity_artifacts,
               const std::string& entity_labels_path) {
  const auto cfg = effective_config(o);
  if (cfg.target_logs.empty()) throw ValidationError("detect needs --target-logs or target_logs in the config");
  const auto art = pl::load_artifacts(cfg.artifacts);
  auto events = read_events(cfg.target_logs, cfg);
  std::optional<pl::LabelMap> labels;
  if (!cfg.labels.empty()) labels = pl::load_labels(cfg.labels);
  const json invocation = cfg.to_json();

  if (two_stage) {
    if (entity_artifacts.empty()) throw ValidationError("--two-stage needs --entity-artifacts");
    const auto entity = pl::load_artifacts(entity_artifacts);
    std::optional<pl::LabelMap> entity_labels;
    if (!entity_labels_path.empty()) entity_labels = pl::load_labels(entity_labels_path);
    auto r = pl::detect_two_stage(art, entity, std::move(events), labels ? &*labels : nullptr,
                                  entity_labels ? &*entity_labels : nullptr);
    r.batched.config["invocation"] = invocation;
    r.entity.config["invocation"] = invocation;
    std::cout << "batched stage\n" << r.batched.table() << "entity stage\n" << r.entity.table();
    if (!cfg.report.empty()) pl::write_json(cfg.report, r.to_json(), 2);
    return 0;
  }
  auto report = pl::detect_events(art, std::move(events), labels ? &*labels : nullptr, o.theta, hooks_for(o));
  report.config = {{"training", art.config.to_json()}, {"invocation", invocation}};
  std::cout << report.table();
  if (!cfg.report.empty()) pl::write_json(cfg.report, report.to_json(), 2);
  return 0;
}

int cmd_adapt(const Overrides& o) {
  const auto cfg = effective_config(o);
  auto art = pl::load_artifacts(cfg.artifacts);
  art.config.threads = cfg.threads;
  if (o.adapt_epochs) art.config.adapt_epochs = *o.adapt_epochs;
  if (o.capacity) art.config.capacity = o.capacity;
  std::vector<RawEvent> events;
  if (!cfg.feedback_logs.empty()) events = read_events(cfg.feedback_logs, cfg);
  std::optional<pl::LabelMap> labels;
  if (!cfg.feedback_labels.empty()) labels = pl::load_labels(cfg.feedback_labels);
  const auto out = pl::adapt_artifacts(art, std::move(events), labels ? &*labels : nullptr);
  pl::save_artifacts(out, cfg.artifacts);
  std::cerr << "detector holds " << out.detector.size() << " points\n";
  return 0;
}

int cmd_threshold(const Overrides& o, const std::string& benign_logs) {
  const auto cfg = effective_config(o);
  if (!o.target_fpr) throw ValidationError("threshold needs --target-fpr");
  auto art = pl::load_artifacts(cfg.artifacts);
  art.config.threads = cfg.threads;
  const auto scores = pl::score_events(art, read_events(benign_logs, cfg));
  if (scores.empty()) throw ValidationError("no benign targets to select a threshold from");
  const double theta = detect::select_threshold(scores, *o.target_fpr);
  art.detector.set_theta(theta);
  pl::write_json((fs::path(cfg.artifacts) / "detector.json").string(), art.detector.to_json());
  std::cout << json({{"theta", theta}, {"benign_targets", scores.size()}}).dump() << '\n';
  return 0;
}

int cmd_eval(const std::string& report_path, const std::string& labels_path, std::optional<double> theta,
             const std::string& out) {
  const json report = pl::read_json(report_path);
  const auto labels = pl::load_labels(labels_path);
  std::vector<std::uint8_t> truth;
  std::vector<double> scores;
  double th = 0.0;
  try {
    th = theta ? *theta : report.at("theta").get<double>();
    for (const auto& t : report.at("targets")) {
      const auto id = t.at("id").get<std::string>();
      auto it = labels.find(id);
      if (it == labels.end()) throw ValidationError("no label for target '" + id + "'");
      truth.push_back(it->second ? 1 : 0);
      scores.push_back(t.at("score").get<double>());
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid report: ") + e.what());
  }
  const json m = metrics::compute_metrics(truth, scores, th).to_json();
  std::cout << m.dump(2) << '\n';
  if (!out.empty()) pl::write_json(out, m, 2);
  return 0;
}

int cmd_synth(harness::ScenarioSpec spec, const std::string& out) {
  if (const char* env = std::getenv("PROVGAD_SEED"); env && *env && spec.seed == 0) {
    spec.seed = std::strtoull(env, nullptr, 10);
  }
  const auto corpus = harness::gen_corpus(spec);
  corpus.write(out);
  std::cerr << "wrote " << corpus.graphs.size() << " graphs (" << corpus.malicious_graph_count()
            << " malicious) to " << out << '\n';
  return 0;
}

struct PerturbArgs {
  std::string logs;
  std::string entity_labels;
  std::string strategy = "MFE";
  double intensity = 1.0;
  std::uint64_t seed = 0;
  std::string target_type;
  std::string out;
};

int cmd_perturb(const PerturbArgs& a) {
  harness::PerturbationSpec spec;
  spec.strategy = harness::parse_strategy(a.strategy);
  spec.intensity = a.intensity;
  spec.seed = a.seed;
  if (!a.target_type.empty()) spec.target_label = hash_label({a.target_type});
  spec.validate();

  const auto lines = read_lines(a.logs);
  std::unordered_map<LabelId, std::string> node_types;
  std::unordered_map<LabelId, std::string> edge_types;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto ev = parse_streamspot_line(lines[i], i + 1);
    const auto f = split_fields(lines[i], '\t');
    node_types[ev.src_label] = f[1];
    node_types[ev.dst_label] = f[3];
    edge_types[ev.edge_label] = f[4];
  }
  const auto entity_labels = pl::load_labels(a.entity_labels);
  Vocabulary vocab(8, 0);
  const auto graphs = build_graphs(parse_lines(lines, LogFormat::kStreamSpot), vocab);

  std::vector<std::string> out_lines;
  std::vector<std::string> batch_labels;
  std::vector<std::string> node_labels;
  std::size_t perturbed = 0;
  for (const auto& g : graphs) {
    std::vector<std::uint8_t> flags(g.num_nodes(), 0);
    bool any = false;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const std::string id = g.batch_id + "/" + g.node_uids[n];
      auto it = entity_labels.find(id);
      flags[n] = it != entity_labels.end() && it->second;
      any = any || flags[n];
      node_labels.push_back(json({{"target", id}, {"label", flags[n] ? "malicious" : "benign"}}).dump());
    }
    const bool applies = any || (spec.strategy == harness::Strategy::kBFP && spec.target_label);
    const auto result = applies ? harness::perturb(g, flags, spec, vocab) : g;
    perturbed += applies ? 1 : 0;
    for (auto& l : harness::to_streamspot_lines(result, node_types, edge_types)) out_lines.push_back(std::move(l));
    batch_labels.push_back(json({{"target", g.batch_id}, {"label", any ? "malicious" : "benign"}}).dump());
  }
  const fs::path dir(a.out);
  write_lines(dir / "corpus.tsv", out_lines);
  write_lines(dir / "labels.jsonl", batch_labels);
  write_lines(dir / "entity_labels.jsonl", node_labels);
  std::cerr << "perturbed " << perturbed << " of " << graphs.size() << " graphs with "
            << harness::to_string(spec.strategy) << '\n';
  return 0;
}

int cmd_bench(const Overrides& o, const std::string& corpus, const std::string& out) {
  const auto cfg = effective_config(o);
  using Clock = std::chrono::steady_clock;
  json phases = json::object();
  auto record = [&](const char* name, Clock::time_point start) {
    phases[name] = {{"seconds", std::chrono::duration<double>(Clock::now() - start).count()},
                    {"peak_rss_kb", peak_rss_kb()}};
  };
  auto zero = [&](const char* name) { phases[name] = {{"seconds", 0.0}, {"peak_rss_kb", 0}}; };

  auto t = Clock::now();
  auto events = read_events(corpus, cfg);
  Vocabulary vocab(cfg.train.d, cfg.train.seed);
  const std::size_t n_events = events.size();
  auto graphs = build_graphs(std::move(events), vocab);
  std::size_t nodes = 0;
  std::size_t edges = 0;
  for (const auto& g : graphs) {
    nodes += g.num_nodes();
    edges += g.num_edges();
  }
  std::vector<ProvenanceGraph> usable;
  for (const auto& g : graphs) {
    if (g.num_nodes() >= 2) usable.push_back(g);
  }
  if (usable.empty()) {
    for (const char* p : {"construction", "training", "embedding", "detection"}) zero(p);
  } else {
    record("construction", t);
    t = Clock::now();
    const auto trained = gmae::train(usable, cfg.train);
    record("training", t);
    t = Clock::now();
    std::vector<pl::GraphPoints> parts;
    for (const auto& g : usable) {
      parts.push_back(pl::select_points(g, gmae::embed(g, trained.params, cfg.train.reverse_edges), cfg.granularity));
    }
    record("embedding", t);
    t = Clock::now();
    std::size_t rows = 0;
    for (const auto& p : parts) rows += p.points.rows();
    Tensor2 pts(rows, trained.params.output_dim());
    std::size_t r = 0;
    for (const auto& p : parts) {
      for (std::size_t i = 0; i < p.points.rows(); ++i, ++r) {
        std::copy(p.points.row(i).begin(), p.points.row(i).end(), pts.row(r).begin());
      }
    }
    if (rows >= 2) {
      try {
        const auto det = detect::fit(pts, std::min(cfg.k, rows - 1));
        for (std::size_t i = 0; i < rows; ++i) (void)detect::score(det, pts.row(i));
      } catch (const ValidationError&) {
        // Degenerate memory (all points identical); timing still reported.
      }
    }
    record("detection", t);
  }
  json report = {{"tool_version", pl::kToolVersion},
                 {"config", cfg.to_json()},
                 {"config_hash", pl::config_hash(cfg.to_json())},
                 {"corpus", {{"events", n_events}, {"graphs", graphs.size()}, {"nodes", nodes}, {"edges", edges}}},
                 {"phases", phases}};
  if (!out.empty()) pl::write_json(out, report, 2);
  std::cout << report.dump(2) << '\n';
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"provgad: provenance-graph anomaly detection"};
  app.require_subcommand(1);
  Overrides o;

  std::string ingest_logs, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "parse logs and write reduced graphs");
  add_config_options(ingest, o);
  ingest->add_option("--logs", ingest_logs, "log file")->required();
  ingest->add_option("--out", ingest_out, "graph store output (JSONL)");

  auto* train = app.add_subcommand("train", "train the model and fit the detector");
  add_config_options(train, o);

  bool two_stage = false;
  std::string entity_artifacts, entity_labels;
  auto* detect_cmd = app.add_subcommand("detect", "score target logs");
  add_config_options(detect_cmd, o);
  detect_cmd->add_flag("--two-stage", two_stage, "batched detection, then entity detection on flagged batches");
  detect_cmd->add_option("--entity-artifacts", entity_artifacts, "entity artifact directory for --two-stage");
  detect_cmd->add_option("--entity-labels", entity_labels, "entity labels for --two-stage");

  auto* adapt = app.add_subcommand("adapt", "adapt artifacts to confirmed-benign feedback");
  add_config_options(adapt, o);

  std::string benign_logs;
  auto* threshold = app.add_subcommand("threshold", "re-select theta from benign logs");
  add_config_options(threshold, o);
  threshold->add_option("--benign-logs", benign_logs, "benign logs to score")->required();

  std::string eval_report, eval_labels, eval_out;
  std::optional<double> eval_theta;
  auto* eval = app.add_subcommand("eval", "compute metrics for a detection report");
  eval->add_option("--report", eval_report, "detection report JSON")->required();
  eval->add_option("--labels", eval_labels, "labels JSONL")->required();
  eval->add_option("--theta", eval_theta, "threshold; defaults to the report's");
  eval->add_option("--out", eval_out, "metrics output path");

  harness::ScenarioSpec spec;
  std::string synth_out = "corpus";
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--seed", spec.seed, "rng seed");
  synth->add_option("--scenarios", spec.scenarios, "scenario count");
  synth->add_option("--graphs-per-scenario", spec.graphs_per_scenario, "graphs per scenario");
  synth->add_option("--min-nodes", spec.min_nodes, "minimum nodes per graph");
  synth->add_option("--max-nodes", spec.max_nodes, "maximum nodes per graph");
  synth->add_option("--attack", spec.attack_scenarios, "attack scenario indices")->delimiter(',');
  synth->add_option("--min-fanout", spec.min_fanout, "minimum scan fan-out");
  synth->add_option("--max-fanout", spec.max_fanout, "maximum scan fan-out");
  synth->add_flag("--benign-hosts", spec.benign_hosts, "inject attacks into benign-scenario graphs");
  bool benign_only = false;
  synth->add_flag("--benign-only", benign_only, "generate no attack scenarios")->excludes("--attack");
  synth->add_option("--out", synth_out, "output directory");

  PerturbArgs pa;
  auto* perturb = app.add_subcommand("perturb", "apply an adversarial perturbation to a corpus");
  perturb->add_option("--logs", pa.logs, "StreamSpot TSV corpus")->required();
  perturb->add_option("--entity-labels", pa.entity_labels, "entity labels JSONL")->required();
  perturb->add_option("--strategy", pa.strategy, "MFE, MSE, MCE or BFP");
  perturb->add_option("--intensity", pa.intensity, "fraction of affected nodes");
  perturb->add_option("--seed", pa.seed, "rng seed");
  perturb->add_option("--target-type", pa.target_type, "BFP target node type");
  perturb->add_option("--out", pa.out, "output directory")->required();

  std::string bench_corpus, bench_out;
  auto* bench = app.add_subcommand("bench", "time construction, training, embedding and detection");
  add_config_options(bench, o);
  bench->add_option("--corpus", bench_corpus, "log file")->required();
  bench->add_option("--out", bench_out, "bench report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(o, ingest_logs, ingest_out);
    if (*train) return cmd_train(o);
    if (*detect_cmd) return cmd_detect(o, two_stage, entity_artifacts, entity_labels);
    if (*adapt) return cmd_adapt(o);
    if (*threshold) return cmd_threshold(o, benign_logs);
    if (*eval) return cmd_eval(eval_report, eval_labels, eval_theta, eval_out);
    if (*synth) {
      if (benign_only) spec.attack_scenarios.clear();
      return cmd_synth(spec, synth_out);
    }
    if (*perturb) return cmd_perturb(pa);
    if (*bench) return cmd_bench(o, bench_corpus, bench_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace provgad::cli
