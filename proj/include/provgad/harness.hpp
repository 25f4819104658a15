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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "provgad/graph.hpp"

namespace provgad::harness {

// Synthetic corpus layout. Scenario i < scenarios is an attack scenario when
// listed in attack_scenarios. Every attack graph carries an injected port-scan
// style intrusion; its background activity follows the attack scenario's own
// behavioral template, or a random benign scenario's when benign_hosts is set.
struct ScenarioSpec {
  std::size_t scenarios = 6;
  std::size_t graphs_per_scenario = 100;
  std::size_t min_nodes = 80;
  std::size_t max_nodes = 120;
  std::vector<std::size_t> attack_scenarios = {5};
  // Number of port-scan targets contacted by the injected process.
  std::size_t min_fanout = 30;
  std::size_t max_fanout = 50;
  bool benign_hosts = false;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_attack(std::size_t scenario) const;
};

struct GraphRecord {
  std::string batch_id;
  std::size_t scenario = 0;
  bool malicious = false;
  std::vector<std::string> node_uids;
  std::vector<std::string> malicious_nodes;  // uids of injected entities
};

struct Corpus {
  std::vector<std::string> lines;  // StreamSpot TSV, no trailing newlines
  std::vector<GraphRecord> graphs;

  std::size_t malicious_graph_count() const;
  std::size_t node_count() const;
  std::size_t malicious_node_count() const;

  // Labels files: {"target", "label"} per line.
  std::vector<std::string> batch_label_lines() const;
  std::vector<std::string> entity_label_lines() const;

  // Writes corpus.tsv, labels.jsonl, entity_labels.jsonl and manifest.json.
  void write(const std::string& dir) const;
};

Corpus gen_corpus(const ScenarioSpec& spec);

// Node and edge type characters used by the generator.
namespace types {
inline constexpr char kProcess = 'a';
inline constexpr char kFile = 'b';
inline constexpr char kSocket = 'c';
inline constexpr char kLibrary = 'd';
inline constexpr char kAttackProcess = 'x';
inline constexpr char kScanTarget = 'y';
inline constexpr char kFork = 'F';
inline constexpr char kRead = 'R';
inline constexpr char kWrite = 'W';
inline constexpr char kConnect = 'C';
inline constexpr char kRecv = 'V';
inline constexpr char kLoad = 'L';
inline constexpr char kScan = 'X';
}  // namespace types

enum class Strategy { kMFE, kMSE, kMCE, kBFP };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);

struct PerturbationSpec {
  Strategy strategy = Strategy::kMFE;
  double intensity = 1.0;
  std::uint64_t seed = 0;
  // BFP relabels benign nodes to this label; defaults to the modal malicious
  // label of the graph.
  std::optional<LabelId> target_label;

  void validate() const;
};

// malicious[n] != 0 marks node n as malicious. Node count is preserved by
// every strategy; BFP also preserves the edge set.
ProvenanceGraph perturb(const ProvenanceGraph& g, const std::vector<std::uint8_t>& malicious,
                        const PerturbationSpec& spec, Vocabulary& vocab);

// Most frequent label among the flagged (or unflagged) nodes; ties go to the
// smaller label id.
std::optional<LabelId> modal_node_label(const ProvenanceGraph& g,
                                        const std::vector<std::uint8_t>& malicious,
                                        bool among_malicious);

// Serializes a reduced graph back to StreamSpot lines, one per (edge, label).
// Type characters are recovered from the given label -> char maps.
std::vector<std::string> to_streamspot_lines(
    const ProvenanceGraph& g, const std::unordered_map<LabelId, std::string>& node_types,
    const std::unordered_map<LabelId, std::string>& edge_types);

}  // namespace provgad::harness
