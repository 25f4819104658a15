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

#include "provgad/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "provgad/error.hpp"
#include "provgad/rng.hpp"

namespace provgad::harness {

using nlohmann::json;

namespace {

enum Action { kReadAction, kWriteAction, kConnectAction, kRecvAction, kLoadAction, kSpecialAction };
constexpr std::size_t kActions = 6;

constexpr std::string_view kSpecialNodes = "fghijklmnopq";
constexpr std::string_view kSpecialEdges = "STUMNOPQGHIJ";

// Behavioral profile of one scenario, fixed by (seed, scenario index).
struct Template {
  char special_node;
  char special_edge;
  std::array<double, kActions> weights;
  double spawn;
  double reuse;
  std::size_t workers;  // processes forked by the root at start-up
};

Template make_template(std::uint64_t seed, std::size_t scenario) {
  Rng rng(mix_seed(seed ^ 0x7e3a11ULL, scenario));
  Template t;
  t.special_node = kSpecialNodes[scenario % kSpecialNodes.size()];
  t.special_edge = kSpecialEdges[scenario % kSpecialEdges.size()];
  double total = 0.0;
  for (double& w : t.weights) {
    w = rng.uniform(0.05, 1.0);
    total += w;
  }
  for (double& w : t.weights) w /= total;
  t.spawn = rng.uniform(0.04, 0.12);
  t.reuse = rng.uniform(0.3, 0.7);
  t.workers = 2 + rng.below(4);
  return t;
}

class GraphWriter {
 public:
  GraphWriter(std::string batch, std::vector<std::string>& lines, Rng& rng)
      : batch_(std::move(batch)), lines_(lines), rng_(rng) {}

  std::size_t add(char type) {
    const std::size_t idx = types_.size();
    types_.push_back(type);
    by_type_[type].push_back(idx);
    return idx;
  }

  std::size_t pick(char type, double reuse) {
    auto& pool = by_type_[type];
    if (!pool.empty() && rng_.uniform() < reuse) return pool[rng_.below(pool.size())];
    return add(type);
  }

  std::size_t random_of(char type) {
    auto& pool = by_type_[type];
    return pool[rng_.below(pool.size())];
  }

  bool has(char type) { return !by_type_[type].empty(); }

  void emit(std::size_t src, std::size_t dst, char edge, std::size_t reps) {
    for (std::size_t r = 0; r < reps; ++r) {
      std::string line = uid(src);
      line += '\t';
      line += types_[src];
      line += '\t';
      line += uid(dst);
      line += '\t';
      line += types_[dst];
      line += '\t';
      line += edge;
      line += '\t';
      line += batch_;
      lines_.push_back(std::move(line));
    }
  }

  std::size_t size() const { return types_.size(); }
  static std::string uid(std::size_t idx) { return std::to_string(idx); }

 private:
  std::string batch_;
  std::vector<std::string>& lines_;
  Rng& rng_;
  std::vector<char> types_;
  std::map<char, std::vector<std::size_t>> by_type_;
};

std::size_t choose(const std::array<double, kActions>& weights, Rng& rng) {
  double r = rng.uniform();
  for (std::size_t i = 0; i < kActions; ++i) {
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  return kActions - 1;
}

void grow_benign(GraphWriter& w, const Template& t, std::size_t target, Rng& rng) {
  using namespace types;
  // The process tree is laid out first so every run of a scenario has a
  // process count proportional to its size.
  std::vector<std::size_t> procs{w.add(kProcess)};
  const auto children = t.workers + static_cast<std::size_t>(std::llround(t.spawn * static_cast<double>(target)));
  for (std::size_t i = 0; i < children; ++i) {
    const std::size_t parent = i < t.workers ? procs.front() : procs[rng.below(procs.size())];
    procs.push_back(w.add(kProcess));
    w.emit(parent, procs.back(), kFork, 1);
  }
  const std::size_t max_iterations = 50 * target + 100;
  for (std::size_t it = 0; it < max_iterations && w.size() < target; ++it) {
    const std::size_t p = procs[rng.below(procs.size())];
    const std::size_t reps = 1 + rng.below(4);
    switch (choose(t.weights, rng)) {
      case kReadAction: w.emit(w.pick(kFile, t.reuse), p, kRead, reps); break;
      case kWriteAction: w.emit(p, w.pick(kFile, t.reuse), kWrite, reps); break;
      case kConnectAction: w.emit(p, w.pick(kSocket, t.reuse), kConnect, reps); break;
      case kRecvAction: w.emit(w.pick(kSocket, t.reuse), p, kRecv, reps); break;
      case kLoadAction: w.emit(w.pick(kLibrary, t.reuse), p, kLoad, reps); break;
      default: w.emit(p, w.pick(t.special_node, t.reuse), t.special_edge, reps); break;
    }
  }
}

// Returns the indices of the injected entities.
std::vector<std::size_t> inject_attack(GraphWriter& w, const ScenarioSpec& spec, Rng& rng) {
  using namespace types;
  std::vector<std::size_t> injected;
  const std::size_t host = w.random_of(kProcess);
  const std::size_t mal = w.add(kAttackProcess);
  injected.push_back(mal);
  w.emit(host, mal, kFork, 1);
  if (w.has(kFile)) {
    for (int i = 0; i < 2; ++i) w.emit(w.random_of(kFile), mal, kRead, 1 + rng.below(2));
  }
  const std::size_t fanout = spec.min_fanout + rng.below(spec.max_fanout - spec.min_fanout + 1);
  for (std::size_t i = 0; i < fanout; ++i) {
    const std::size_t target = w.add(kScanTarget);
    injected.push_back(target);
    w.emit(mal, target, kScan, 1 + rng.below(2));
  }
  const std::size_t dropped = w.add(kFile);
  injected.push_back(dropped);
  w.emit(mal, dropped, kWrite, 2);
  return injected;
}

json label_record(const std::string& target, bool malicious) {
  return {{"target", target}, {"label", malicious ? "malicious" : "benign"}};
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

void ScenarioSpec::validate() const {
  if (scenarios == 0) throw ValidationError("spec needs at least one scenario");
  if (graphs_per_scenario == 0) throw ValidationError("graphs_per_scenario must be positive");
  if (min_nodes < 4 || max_nodes < min_nodes) {
    throw ValidationError("node range must satisfy 4 <= min_nodes <= max_nodes");
  }
  if (min_fanout < 1 || max_fanout < min_fanout) {
    throw ValidationError("fan-out range must satisfy 1 <= min_fanout <= max_fanout");
  }
  std::set<std::size_t> attacks(attack_scenarios.begin(), attack_scenarios.end());
  for (std::size_t a : attacks) {
    if (a >= scenarios) throw ValidationError("attack scenario index out of range");
  }
  if (attacks.size() >= scenarios) throw ValidationError("spec needs at least one benign scenario");
}

bool ScenarioSpec::is_attack(std::size_t scenario) const {
  return std::find(attack_scenarios.begin(), attack_scenarios.end(), scenario) !=
         attack_scenarios.end();
}

Corpus gen_corpus(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<std::size_t> benign;
  for (std::size_t s = 0; s < spec.scenarios; ++s) {
    if (!spec.is_attack(s)) benign.push_back(s);
  }
  std::vector<Template> templates;
  for (std::size_t s = 0; s < spec.scenarios; ++s) templates.push_back(make_template(spec.seed, s));

  Corpus corpus;
  Rng rng(mix_seed(spec.seed, 0xc0));
  for (std::size_t s = 0; s < spec.scenarios; ++s) {
    for (std::size_t i = 0; i < spec.graphs_per_scenario; ++i) {
      GraphRecord rec;
      rec.batch_id = std::to_string(s * spec.graphs_per_scenario + i);
      rec.scenario = s;
      rec.malicious = spec.is_attack(s);
      GraphWriter w(rec.batch_id, corpus.lines, rng);
      const std::size_t target = spec.min_nodes + rng.below(spec.max_nodes - spec.min_nodes + 1);
      const Template& base = rec.malicious && spec.benign_hosts
                                 ? templates[benign[rng.below(benign.size())]]
                                 : templates[s];
      grow_benign(w, base, target, rng);
      if (rec.malicious) {
        for (std::size_t idx : inject_attack(w, spec, rng)) {
          rec.malicious_nodes.push_back(GraphWriter::uid(idx));
        }
      }
      for (std::size_t n = 0; n < w.size(); ++n) rec.node_uids.push_back(GraphWriter::uid(n));
      corpus.graphs.push_back(std::move(rec));
    }
  }
  return corpus;
}

std::size_t Corpus::malicious_graph_count() const {
  return static_cast<std::size_t>(
      std::count_if(graphs.begin(), graphs.end(), [](const auto& g) { return g.malicious; }));
}

std::size_t Corpus::node_count() const {
  std::size_t n = 0;
  for (const auto& g : graphs) n += g.node_uids.size();
  return n;
}

std::size_t Corpus::malicious_node_count() const {
  std::size_t n = 0;
  for (const auto& g : graphs) n += g.malicious_nodes.size();
  return n;
}

std::vector<std::string> Corpus::batch_label_lines() const {
  std::vector<std::string> out;
  for (const auto& g : graphs) out.push_back(label_record(g.batch_id, g.malicious).dump());
  return out;
}

std::vector<std::string> Corpus::entity_label_lines() const {
  std::vector<std::string> out;
  for (const auto& g : graphs) {
    std::set<std::string> bad(g.malicious_nodes.begin(), g.malicious_nodes.end());
    for (const auto& uid : g.node_uids) {
      out.push_back(label_record(g.batch_id + "/" + uid, bad.count(uid) > 0).dump());
    }
  }
  return out;
}

void Corpus::write(const std::string& dir) const {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_lines(root / "corpus.tsv", lines);
  write_lines(root / "labels.jsonl", batch_label_lines());
  write_lines(root / "entity_labels.jsonl", entity_label_lines());
  json manifest = json::array();
  for (const auto& g : graphs) {
    manifest.push_back({{"batch", g.batch_id}, {"scenario", g.scenario}, {"malicious", g.malicious}});
  }
  std::ofstream out(root / "manifest.json", std::ios::binary);
  out << json{{"graphs", manifest}}.dump(1) << '\n';
}

Strategy parse_strategy(std::string_view name) {
  if (name == "MFE" || name == "mfe") return Strategy::kMFE;
  if (name == "MSE" || name == "mse") return Strategy::kMSE;
  if (name == "MCE" || name == "mce") return Strategy::kMCE;
  if (name == "BFP" || name == "bfp") return Strategy::kBFP;
  throw ValidationError("unknown perturbation strategy '" + std::string(name) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kMFE: return "MFE";
    case Strategy::kMSE: return "MSE";
    case Strategy::kMCE: return "MCE";
    case Strategy::kBFP: return "BFP";
  }
  return "?";
}

void PerturbationSpec::validate() const {
  if (!(intensity > 0.0 && intensity <= 1.0)) throw ValidationError("intensity must lie in (0, 1]");
}

std::optional<LabelId> modal_node_label(const ProvenanceGraph& g,
                                        const std::vector<std::uint8_t>& malicious,
                                        bool among_malicious) {
  std::map<LabelId, std::size_t> counts;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    if ((malicious[n] != 0) == among_malicious) ++counts[g.node_labels[n]];
  }
  std::optional<LabelId> best;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

namespace {

std::vector<std::size_t> select_fraction(std::vector<std::size_t> pool, double intensity, Rng& rng) {
  const auto count = std::min(
      pool.size(),
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(intensity * static_cast<double>(pool.size())))));
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::size_t> nodes_where(const std::vector<std::uint8_t>& malicious, bool value) {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < malicious.size(); ++n) {
    if ((malicious[n] != 0) == value) out.push_back(n);
  }
  return out;
}

ProvenanceGraph apply_mfe(ProvenanceGraph g, const std::vector<std::uint8_t>& malicious,
                          double intensity, Rng& rng) {
  const auto target = modal_node_label(g, malicious, false);
  if (!target) throw ValidationError("MFE needs at least one benign node");
  for (std::size_t n : select_fraction(nodes_where(malicious, true), intensity, rng)) {
    g.node_labels[n] = *target;
  }
  return g;
}

ProvenanceGraph apply_mse(ProvenanceGraph g, const std::vector<std::uint8_t>& malicious,
                          double intensity, Rng& rng) {
  const auto bad = nodes_where(malicious, true);
  const auto good = nodes_where(malicious, false);
  if (good.empty()) throw ValidationError("MSE needs at least one benign node");
  std::map<LabelId, std::size_t> counts;
  for (const auto& e : g.edges) {
    if (!malicious[e.src] && !malicious[e.dst]) {
      for (LabelId l : e.labels) ++counts[l];
    }
  }
  if (counts.empty()) {
    for (const auto& e : g.edges) {
      for (LabelId l : e.labels) ++counts[l];
    }
  }
  if (counts.empty()) throw ValidationError("MSE needs at least one edge to copy a label from");
  LabelId common = counts.begin()->first;
  std::size_t best = 0;
  for (const auto& [label, count] : counts) {
    if (count > best) {
      common = label;
      best = count;
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> present;
  for (const auto& e : g.edges) present.emplace(e.src, e.dst);
  const auto wanted = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(intensity * static_cast<double>(bad.size()))));
  for (std::size_t added = 0, tries = 0; added < wanted && tries < 100 * wanted; ++tries) {
    const std::size_t src = good[rng.below(good.size())];
    const std::size_t dst = bad[rng.below(bad.size())];
    if (!present.emplace(src, dst).second) continue;
    g.edges.push_back({src, dst, {common}});
    ++added;
  }
  return g;
}

ProvenanceGraph apply_bfp(ProvenanceGraph g, const std::vector<std::uint8_t>& malicious,
                          const PerturbationSpec& spec, Rng& rng) {
  std::optional<LabelId> target = spec.target_label;
  if (!target) target = modal_node_label(g, malicious, true);
  if (!target) throw ValidationError("BFP needs a target label or malicious nodes to copy one from");
  const auto good = nodes_where(malicious, false);
  if (good.empty()) return g;
  for (std::size_t n : select_fraction(good, spec.intensity, rng)) g.node_labels[n] = *target;
  return g;
}

}  // namespace

ProvenanceGraph perturb(const ProvenanceGraph& g, const std::vector<std::uint8_t>& malicious,
                        const PerturbationSpec& spec, Vocabulary& vocab) {
  spec.validate();
  if (malicious.size() != g.num_nodes()) {
    throw ValidationError("malicious flags do not match the node count");
  }
  const bool any = std::any_of(malicious.begin(), malicious.end(), [](auto m) { return m != 0; });
  if (spec.strategy != Strategy::kBFP && !any) {
    throw ValidationError(std::string(to_string(spec.strategy)) +
                          " needs at least one malicious node in batch '" + g.batch_id + "'");
  }
  Rng mfe_rng(mix_seed(spec.seed, 1));
  Rng mse_rng(mix_seed(spec.seed, 2));
  Rng bfp_rng(mix_seed(spec.seed, 3));
  ProvenanceGraph out;
  switch (spec.strategy) {
    case Strategy::kMFE: out = apply_mfe(g, malicious, spec.intensity, mfe_rng); break;
    case Strategy::kMSE: out = apply_mse(g, malicious, spec.intensity, mse_rng); break;
    case Strategy::kMCE:
      out = apply_mse(apply_mfe(g, malicious, spec.intensity, mfe_rng), malicious, spec.intensity,
                      mse_rng);
      break;
    case Strategy::kBFP: out = apply_bfp(g, malicious, spec, bfp_rng); break;
  }
  materialize(out, vocab);
  return out;
}

std::vector<std::string> to_streamspot_lines(
    const ProvenanceGraph& g, const std::unordered_map<LabelId, std::string>& node_types,
    const std::unordered_map<LabelId, std::string>& edge_types) {
  auto type_of = [](const std::unordered_map<LabelId, std::string>& m, LabelId id) {
    auto it = m.find(id);
    if (it == m.end()) throw ValidationError("no type name known for label " + label_to_string(id));
    return it->second;
  };
  std::vector<std::string> lines;
  for (const auto& e : g.edges) {
    for (LabelId l : e.labels) {
      lines.push_back(g.node_uids[e.src] + '\t' + type_of(node_types, g.node_labels[e.src]) + '\t' +
                      g.node_uids[e.dst] + '\t' + type_of(node_types, g.node_labels[e.dst]) + '\t' +
                      type_of(edge_types, l) + '\t' + g.batch_id);
    }
  }
  return lines;
}

}  // namespace provgad::harness
