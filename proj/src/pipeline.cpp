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

#include "provgad/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "provgad/error.hpp"
#include "provgad/hash.hpp"
#include "provgad/rng.hpp"

namespace provgad::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs fn(i) for i in [0, n) over contiguous chunks; fn must only write slot i.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<gmae::OutputEmbeddings> embed_all(const std::vector<ProvenanceGraph>& graphs,
                                              const gmae::ModelParams& params, bool reverse_edges,
                                              unsigned threads) {
  std::vector<gmae::OutputEmbeddings> out(graphs.size());
  parallel_for(graphs.size(), threads,
               [&](std::size_t i) { out[i] = gmae::embed(graphs[i], params, reverse_edges); });
  return out;
}

Tensor2 stack(const std::vector<GraphPoints>& parts, std::size_t dim, std::size_t skip_first = 0) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.points.rows();
  rows -= std::min(rows, skip_first);
  Tensor2 out(rows, dim);
  std::size_t r = 0;
  std::size_t skipped = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.points.rows(); ++i) {
      if (skipped < skip_first) {
        ++skipped;
        continue;
      }
      std::copy(p.points.row(i).begin(), p.points.row(i).end(), out.row(r++).begin());
    }
  }
  return out;
}

std::vector<ProvenanceGraph> non_empty(std::vector<ProvenanceGraph> graphs) {
  graphs.erase(std::remove_if(graphs.begin(), graphs.end(),
                              [](const ProvenanceGraph& g) { return g.num_nodes() == 0; }),
               graphs.end());
  return graphs;
}

std::vector<ProvenanceGraph> trainable(const std::vector<ProvenanceGraph>& graphs) {
  std::vector<ProvenanceGraph> out;
  for (const auto& g : graphs) {
    if (g.num_nodes() >= 2) out.push_back(g);
  }
  return out;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing artifact: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Granularity parse_granularity(std::string_view name) {
  if (name == "batched" || name == "batched-log") return Granularity::kBatched;
  if (name == "entity") return Granularity::kEntity;
  throw ValidationError("unknown granularity '" + std::string(name) + "' (expected batched or entity)");
}

std::string_view to_string(Granularity g) {
  return g == Granularity::kBatched ? "batched" : "entity";
}

std::size_t default_dim(Granularity g) { return g == Granularity::kBatched ? 256 : 64; }

gmae::TrainConfig PipelineConfig::default_train(Granularity g) {
  gmae::TrainConfig t;
  t.d = default_dim(g);
  return t;
}

void PipelineConfig::validate() const {
  train.validate();
  if (k < 1) throw ValidationError("k must be at least 1");
  if (theta && target_fpr) {
    throw ValidationError("configure either theta or target_fpr, not both");
  }
  if (!theta && !target_fpr) throw ValidationError("configure one of theta or target_fpr");
  if (theta && !(std::isfinite(*theta) && *theta > 0.0)) {
    throw ValidationError("theta must be a finite positive number");
  }
  if (target_fpr && !(*target_fpr > 0.0 && *target_fpr < 1.0)) {
    throw ValidationError("target_fpr must lie in (0, 1)");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ValidationError("holdout_fraction must lie in (0, 1)");
  }
  if (capacity && *capacity < k + 1) throw ValidationError("capacity must be at least k+1");
  if (threads < 1) throw ValidationError("threads must be at least 1");
}

json PipelineConfig::to_json() const {
  json doc = train.to_json();
  doc["granularity"] = to_string(granularity);
  doc["k"] = k;
  doc["theta"] = opt_json(theta);
  doc["target_fpr"] = opt_json(target_fpr);
  doc["holdout_fraction"] = holdout_fraction;
  doc["capacity"] = capacity ? json(*capacity) : json(nullptr);
  doc["adapt_epochs"] = adapt_epochs;
  doc["format"] = provgad::to_string(format);
  doc["threads"] = threads;
  doc["train_logs"] = train_logs;
  doc["target_logs"] = target_logs;
  doc["labels"] = labels;
  doc["feedback_logs"] = feedback_logs;
  doc["feedback_labels"] = feedback_labels;
  doc["artifacts"] = artifacts;
  doc["report"] = report;
  return doc;
}

PipelineConfig PipelineConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("config must be a JSON object");
  PipelineConfig c;
  try {
    if (doc.contains("granularity")) c.granularity = parse_granularity(doc["granularity"].get<std::string>());
    c.train = gmae::TrainConfig::from_json(doc, default_train(c.granularity));
    c.k = doc.value("k", c.k);
    const bool has_theta = doc.contains("theta") && !doc["theta"].is_null();
    const bool has_fpr = doc.contains("target_fpr") && !doc["target_fpr"].is_null();
    if (has_theta && has_fpr) throw ValidationError("configure either theta or target_fpr, not both");
    if (has_theta) {
      c.theta = doc["theta"].get<double>();
      c.target_fpr.reset();
    }
    if (has_fpr) c.target_fpr = doc["target_fpr"].get<double>();
    c.holdout_fraction = doc.value("holdout_fraction", c.holdout_fraction);
    if (doc.contains("capacity") && !doc["capacity"].is_null()) c.capacity = doc["capacity"].get<std::size_t>();
    c.adapt_epochs = doc.value("adapt_epochs", c.adapt_epochs);
    if (doc.contains("format")) c.format = parse_log_format(doc["format"].get<std::string>());
    c.threads = doc.value("threads", c.threads);
    c.train_logs = doc.value("train_logs", c.train_logs);
    c.target_logs = doc.value("target_logs", c.target_logs);
    c.labels = doc.value("labels", c.labels);
    c.feedback_logs = doc.value("feedback_logs", c.feedback_logs);
    c.feedback_labels = doc.value("feedback_labels", c.feedback_labels);
    c.artifacts = doc.value("artifacts", c.artifacts);
    c.report = doc.value("report", c.report);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid config: ") + e.what());
  }
  return c;
}

LabelMap parse_labels(const std::vector<std::string>& lines) {
  LabelMap labels;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \r\t") == std::string::npos) continue;
    try {
      const json rec = json::parse(lines[i]);
      const auto target = rec.at("target").get<std::string>();
      const auto label = rec.at("label").get<std::string>();
      if (label != "benign" && label != "malicious") {
        throw SchemaError("labels line " + std::to_string(i + 1) + ": label must be benign or malicious");
      }
      labels[target] = label == "malicious";
    } catch (const json::exception& e) {
      throw SchemaError("labels line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return labels;
}

LabelMap load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open labels file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return parse_labels(lines);
}

GraphPoints select_points(const ProvenanceGraph& g, const gmae::OutputEmbeddings& h,
                          Granularity granularity) {
  GraphPoints out;
  if (granularity == Granularity::kBatched) {
    out.points = Tensor2::row_vector(h.state);
    out.ids.push_back(g.batch_id);
  } else {
    out.points = h.node;
    for (const auto& uid : g.node_uids) out.ids.push_back(g.batch_id + "/" + uid);
  }
  return out;
}

Artifacts train_artifacts(const PipelineConfig& cfg, std::vector<RawEvent> events,
                          const PipelineHooks& hooks) {
  cfg.validate();
  Artifacts a;
  a.config = cfg;
  a.vocab = Vocabulary(cfg.train.d, cfg.train.seed);
  hooks.stage("build_graphs");
  std::vector<ProvenanceGraph> graphs = non_empty(build_graphs(std::move(events), a.vocab));
  if (graphs.empty()) throw ValidationError("no training graphs found in the training logs");

  std::vector<ProvenanceGraph> holdout;
  if (!cfg.theta) {
    std::vector<std::size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(cfg.train.seed, 3));
    rng.shuffle(order);
    const auto n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(graphs.size()))));
    if (n_hold >= graphs.size()) {
      throw ValidationError("too few training graphs to hold out benign graphs for threshold selection");
    }
    std::vector<std::uint8_t> held(graphs.size(), 0);
    for (std::size_t i = 0; i < n_hold; ++i) held[order[i]] = 1;
    std::vector<ProvenanceGraph> kept;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      if (held[i]) {
        a.holdout_batches.push_back(graphs[i].batch_id);
        holdout.push_back(std::move(graphs[i]));
      } else {
        kept.push_back(std::move(graphs[i]));
      }
    }
    graphs = std::move(kept);
  }
  if (cfg.granularity == Granularity::kBatched && graphs.size() < cfg.k + 1) {
    throw ValidationError("batched mode needs at least k+1 = " + std::to_string(cfg.k + 1) +
                          " training graphs, got " + std::to_string(graphs.size()));
  }

  hooks.stage("train");
  const auto usable = trainable(graphs);
  if (usable.empty()) throw ValidationError("no training graph has at least two nodes");
  auto result = gmae::train(usable, cfg.train);
  a.params = std::move(result.params);
  a.loss_trace = std::move(result.loss_trace);

  hooks.stage("embed");
  const auto h = embed_all(graphs, a.params, cfg.train.reverse_edges, cfg.threads);
  hooks.stage(cfg.granularity == Granularity::kBatched ? "select_points:state" : "select_points:node");
  std::vector<GraphPoints> parts;
  for (std::size_t i = 0; i < graphs.size(); ++i) parts.push_back(select_points(graphs[i], h[i], cfg.granularity));
  hooks.stage("fit");
  a.detector = detect::fit(stack(parts, a.params.output_dim()), cfg.k);

  if (cfg.theta) {
    a.detector.set_theta(cfg.theta);
  } else {
    hooks.stage("select_threshold");
    const auto hh = embed_all(holdout, a.params, cfg.train.reverse_edges, cfg.threads);
    std::vector<double> scores;
    for (std::size_t i = 0; i < holdout.size(); ++i) {
      const auto pts = select_points(holdout[i], hh[i], cfg.granularity);
      for (std::size_t r = 0; r < pts.points.rows(); ++r) scores.push_back(detect::score(a.detector, pts.points.row(r)));
    }
    a.detector.set_theta(detect::select_threshold(scores, *cfg.target_fpr));
  }
  a.memory = std::move(graphs);
  return a;
}

std::vector<double> score_events(const Artifacts& artifacts, std::vector<RawEvent> events,
                                 std::vector<std::string>* ids) {
  Vocabulary vocab = artifacts.vocab;
  const auto graphs = non_empty(build_graphs(std::move(events), vocab));
  const auto& cfg = artifacts.config;
  std::vector<std::vector<double>> per_graph(graphs.size());
  std::vector<std::vector<std::string>> per_ids(graphs.size());
  parallel_for(graphs.size(), cfg.threads, [&](std::size_t i) {
    const auto h = gmae::embed(graphs[i], artifacts.params, cfg.train.reverse_edges);
    auto pts = select_points(graphs[i], h, cfg.granularity);
    for (std::size_t r = 0; r < pts.points.rows(); ++r) {
      per_graph[i].push_back(detect::score(artifacts.detector, pts.points.row(r)));
    }
    per_ids[i] = std::move(pts.ids);
  });
  std::vector<double> scores;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    scores.insert(scores.end(), per_graph[i].begin(), per_graph[i].end());
    if (ids) ids->insert(ids->end(), per_ids[i].begin(), per_ids[i].end());
  }
  return scores;
}

DetectionReport detect_events(const Artifacts& artifacts, std::vector<RawEvent> events,
                              const LabelMap* labels, std::optional<double> theta_override,
                              const PipelineHooks& hooks) {
  const std::optional<double> theta = theta_override ? theta_override : artifacts.detector.theta();
  if (!theta) throw ValidationError("no detection threshold: pass theta or run threshold selection");
  DetectionReport report;
  report.granularity = artifacts.config.granularity;
  report.theta = *theta;
  report.config = {{"training", artifacts.config.to_json()}};

  hooks.stage("build_graphs");
  hooks.stage("embed");
  hooks.stage(report.granularity == Granularity::kBatched ? "select_points:state" : "select_points:node");
  const auto start = Clock::now();
  std::vector<std::string> ids;
  const auto scores = score_events(artifacts, std::move(events), &ids);
  report.timing["scoring"] = seconds_since(start);

  std::vector<std::uint8_t> truth;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    TargetResult t;
    t.id = ids[i];
    const auto v = detect::verdict_for(scores[i], *theta);
    t.score = v.score;
    t.malicious = v.malicious;
    if (labels) {
      auto it = labels->find(t.id);
      if (it == labels->end()) throw ValidationError("no label for target '" + t.id + "'");
      t.label = it->second;
      truth.push_back(it->second ? 1 : 0);
    }
    report.targets.push_back(std::move(t));
  }
  if (labels) report.metrics = metrics::compute_metrics(truth, scores, *theta);
  return report;
}

Artifacts adapt_artifacts(const Artifacts& artifacts, std::vector<RawEvent> feedback,
                          const LabelMap* labels) {
  if (labels) {
    for (const auto& [target, malicious] : *labels) {
      if (malicious) {
        throw ValidationError("feedback target '" + target +
                              "' is tagged malicious; only confirmed-benign feedback is accepted");
      }
    }
  }
  Artifacts out = artifacts;
  if (feedback.empty()) return out;
  const auto& cfg = out.config;
  auto graphs = non_empty(build_graphs(std::move(feedback), out.vocab));
  if (graphs.empty()) return out;

  const auto usable = trainable(graphs);
  if (cfg.adapt_epochs > 0 && !usable.empty()) {
    gmae::TrainConfig tc = cfg.train;
    tc.epochs = cfg.adapt_epochs;
    tc.seed = mix_seed(cfg.train.seed, 0xada + out.params.layers);
    auto result = gmae::train(usable, tc, &out.params);
    out.params = std::move(result.params);
    out.loss_trace.insert(out.loss_trace.end(), result.loss_trace.begin(), result.loss_trace.end());
  }

  const std::size_t dim = out.params.output_dim();
  const auto old_h = embed_all(out.memory, out.params, cfg.train.reverse_edges, cfg.threads);
  std::vector<GraphPoints> old_parts;
  for (std::size_t i = 0; i < out.memory.size(); ++i) {
    old_parts.push_back(select_points(out.memory[i], old_h[i], cfg.granularity));
  }
  out.detector = detect::reembed(out.detector, stack(old_parts, dim, out.memory_offset));

  const auto new_h = embed_all(graphs, out.params, cfg.train.reverse_edges, cfg.threads);
  std::vector<GraphPoints> new_parts;
  for (std::size_t i = 0; i < graphs.size(); ++i) new_parts.push_back(select_points(graphs[i], new_h[i], cfg.granularity));
  const Tensor2 fresh = stack(new_parts, dim);
  const std::size_t before = out.detector.size();
  const std::size_t capacity = cfg.capacity.value_or(before + fresh.rows());
  out.detector = detect::absorb(out.detector, fresh, capacity);

  std::size_t evicted = before + fresh.rows() - out.detector.size();
  for (auto& g : graphs) out.memory.push_back(std::move(g));
  auto points_of = [&](const ProvenanceGraph& g) {
    return cfg.granularity == Granularity::kBatched ? std::size_t{1} : g.num_nodes();
  };
  evicted += out.memory_offset;
  std::size_t drop = 0;
  while (drop < out.memory.size() && evicted >= points_of(out.memory[drop])) {
    evicted -= points_of(out.memory[drop]);
    ++drop;
  }
  out.memory.erase(out.memory.begin(), out.memory.begin() + static_cast<std::ptrdiff_t>(drop));
  out.memory_offset = evicted;
  return out;
}

TwoStageReport detect_two_stage(const Artifacts& batched, const Artifacts& entity,
                                std::vector<RawEvent> events, const LabelMap* batch_labels,
                                const LabelMap* entity_labels) {
  if (batched.config.granularity != Granularity::kBatched ||
      entity.config.granularity != Granularity::kEntity) {
    throw ValidationError("two-stage detection needs batched and entity artifacts");
  }
  TwoStageReport r;
  r.batched = detect_events(batched, events, batch_labels);
  std::set<std::string> flagged;
  for (const auto& t : r.batched.targets) {
    if (t.malicious) flagged.insert(t.id);
  }
  std::vector<RawEvent> selected;
  for (auto& ev : events) {
    if (flagged.count(ev.batch_id)) selected.push_back(std::move(ev));
  }
  const auto theta = entity.detector.theta();
  if (selected.empty()) {
    r.entity.granularity = Granularity::kEntity;
    r.entity.theta = theta.value_or(0.0);
    r.entity.config = {{"training", entity.config.to_json()}};
    return r;
  }
  r.entity = detect_events(entity, std::move(selected), entity_labels);
  return r;
}

json DetectionReport::to_json() const {
  json doc;
  doc["tool_version"] = kToolVersion;
  doc["config"] = config;
  doc["config_hash"] = config_hash(config);
  doc["granularity"] = to_string(granularity);
  doc["theta"] = theta;
  json targets_json = json::array();
  for (const auto& t : targets) {
    json rec = {{"id", t.id}, {"score", t.score}, {"verdict", t.malicious ? "malicious" : "benign"}};
    if (t.label) rec["label"] = *t.label ? "malicious" : "benign";
    targets_json.push_back(std::move(rec));
  }
  doc["targets"] = std::move(targets_json);
  doc["metrics"] = metrics ? metrics->to_json() : json(nullptr);
  doc["timing"] = timing;
  return doc;
}

std::string DetectionReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(32) << "target" << std::right << std::setw(14) << "score"
     << std::setw(12) << "verdict" << std::setw(12) << "label" << '\n';
  for (const auto& t : targets) {
    os << std::left << std::setw(32) << t.id << std::right << std::setw(14) << std::fixed
       << std::setprecision(4) << t.score << std::setw(12) << (t.malicious ? "malicious" : "benign")
       << std::setw(12) << (t.label ? (*t.label ? "malicious" : "benign") : "-") << '\n';
  }
  if (metrics) {
    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("null");
      std::ostringstream s;
      s << std::fixed << std::setprecision(4) << *v;
      return s.str();
    };
    os << "TP=" << metrics->counts.tp << " FP=" << metrics->counts.fp << " TN=" << metrics->counts.tn
       << " FN=" << metrics->counts.fn << " precision=" << fmt(metrics->precision)
       << " recall=" << fmt(metrics->recall) << " fpr=" << fmt(metrics->fpr) << " f1=" << fmt(metrics->f1)
       << " auc=" << fmt(metrics->auc) << '\n';
  }
  return os.str();
}

json TwoStageReport::to_json() const {
  return {{"tool_version", kToolVersion}, {"stages", {{"batched", batched.to_json()}, {"entity", entity.to_json()}}}};
}

std::string config_hash(const json& config) { return to_hex(xxh64(config.dump())); }

void write_json(const std::string& path, const json& doc, int indent) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(indent) << '\n';
}

json read_json(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("invalid JSON in " + path + ": " + e.what());
  }
}

void save_artifacts(const Artifacts& a, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  write_json((root / "vocab.json").string(), a.vocab.to_json());
  write_json((root / "checkpoint.json").string(), gmae::checkpoint_to_json(a.params, a.config.train, "vocab.json"));
  write_json((root / "detector.json").string(), a.detector.to_json());
  {
    std::ofstream out(root / "memory.jsonl", std::ios::binary);
    if (!out) throw Error("cannot write " + (root / "memory.jsonl").string());
    for (const auto& g : a.memory) out << graph_to_json(g).dump() << '\n';
  }
  json meta;
  meta["tool_version"] = kToolVersion;
  meta["config"] = a.config.to_json();
  meta["loss_trace"] = a.loss_trace;
  meta["holdout_batches"] = a.holdout_batches;
  meta["memory_offset"] = a.memory_offset;
  write_json((root / "training.json").string(), meta, 2);
}

Artifacts load_artifacts(const std::string& dir) {
  const fs::path root(dir);
  for (const char* name : {"training.json", "vocab.json", "checkpoint.json", "detector.json", "memory.jsonl"}) {
    if (!fs::exists(root / name)) {
      throw MissingArtifactError("missing artifact " + (root / name).string() + " (run train first)");
    }
  }
  Artifacts a;
  const json meta = read_json((root / "training.json").string());
  try {
    a.config = PipelineConfig::from_json(meta.at("config"));
    a.loss_trace = meta.at("loss_trace").get<std::vector<double>>();
    a.holdout_batches = meta.at("holdout_batches").get<std::vector<std::string>>();
    a.memory_offset = meta.at("memory_offset").get<std::size_t>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid training.json: ") + e.what());
  }
  a.vocab = Vocabulary::from_json(read_json((root / "vocab.json").string()));
  auto cp = gmae::checkpoint_from_json(read_json((root / "checkpoint.json").string()));
  a.params = std::move(cp.params);
  a.config.train = cp.config;
  a.detector = detect::DetectorState::from_json(read_json((root / "detector.json").string()));
  std::ifstream in(root / "memory.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      a.memory.push_back(graph_from_json(json::parse(line), a.vocab));
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("invalid memory.jsonl: ") + e.what());
    }
  }
  return a;
}

Artifacts run_training(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.train_logs.empty()) throw ValidationError("no training logs configured");
  auto events = parse_file(cfg.train_logs, cfg.format, cfg.threads);
  Artifacts a = train_artifacts(cfg, std::move(events));
  save_artifacts(a, cfg.artifacts);
  return a;
}

DetectionReport run_detection(const PipelineConfig& cfg, std::optional<double> theta_override) {
  if (cfg.target_logs.empty()) throw ValidationError("no target logs configured");
  Artifacts a = load_artifacts(cfg.artifacts);
  a.config.threads = cfg.threads;
  auto events = parse_file(cfg.target_logs, cfg.format, cfg.threads);
  std::optional<LabelMap> labels;
  if (!cfg.labels.empty()) labels = load_labels(cfg.labels);
  auto report = detect_events(a, std::move(events), labels ? &*labels : nullptr, theta_override);
  report.config = {{"training", a.config.to_json()}, {"invocation", cfg.to_json()}};
  if (!cfg.report.empty()) write_json(cfg.report, report.to_json(), 2);
  return report;
}

Artifacts run_adaption(const PipelineConfig& cfg) {
  Artifacts a = load_artifacts(cfg.artifacts);
  a.config.threads = cfg.threads;
  a.config.adapt_epochs = cfg.adapt_epochs;
  if (cfg.capacity) a.config.capacity = cfg.capacity;
  std::vector<RawEvent> events;
  if (!cfg.feedback_logs.empty()) events = parse_file(cfg.feedback_logs, cfg.format, cfg.threads);
  std::optional<LabelMap> labels;
  if (!cfg.feedback_labels.empty()) labels = load_labels(cfg.feedback_labels);
  Artifacts out = adapt_artifacts(a, std::move(events), labels ? &*labels : nullptr);
  save_artifacts(out, cfg.artifacts);
  return out;
}

}  // namespace provgad::pipeline
