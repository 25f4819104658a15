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

#include "provgad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "provgad/error.hpp"
#include "provgad/rng.hpp"

namespace provgad {

using nlohmann::json;

namespace {

constexpr std::uint64_t kNodeSalt = 0x6e6f6465;  // "node"
constexpr std::uint64_t kEdgeSalt = 0x65646765;  // "edge"

}  // namespace

MultiGraph build_multigraph(std::span<const RawEvent> events) {
  MultiGraph g;
  if (!events.empty()) g.batch_id = events.front().batch_id;
  std::unordered_map<std::string, std::size_t> ids;
  auto node = [&](const std::string& uid, LabelId label) {
    auto [it, inserted] = ids.try_emplace(uid, g.node_uids.size());
    if (inserted) {
      g.node_uids.push_back(uid);
      g.node_labels.push_back(label);
    }
    return it->second;
  };
  g.edges.reserve(events.size());
  for (const auto& ev : events) {
    if (ev.batch_id != g.batch_id) {
      throw ValidationError("build_multigraph: events span batches '" + g.batch_id + "' and '" +
                            ev.batch_id + "'");
    }
    const std::size_t s = node(ev.src_uid, ev.src_label);
    const std::size_t d = node(ev.dst_uid, ev.dst_label);
    g.edges.push_back({s, d, ev.edge_label});
  }
  return g;
}

Vocabulary::Vocabulary(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ValidationError("vocabulary dimension must be positive");
}

Vocabulary::Vocabulary(const Vocabulary& other) : dim_(other.dim_), seed_(other.seed_) {
  std::lock_guard lock(other.mu_);
  nodes_ = other.nodes_;
  edges_ = other.edges_;
}

Vocabulary& Vocabulary::operator=(const Vocabulary& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  dim_ = other.dim_;
  seed_ = other.seed_;
  nodes_ = other.nodes_;
  edges_ = other.edges_;
  return *this;
}

std::size_t Vocabulary::allocate(Table& table, LabelId label, std::uint64_t salt) {
  auto it = table.index.find(label);
  if (it != table.index.end()) return it->second;
  Rng rng(mix_seed(seed_ ^ salt, label.value));
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
  std::vector<double> row(dim_);
  for (double& v : row) v = rng.uniform(-bound, bound);
  const std::size_t idx = table.labels.size();
  table.index.emplace(label, idx);
  table.labels.push_back(label);
  table.rows.push_back(std::move(row));
  return idx;
}

std::size_t Vocabulary::node_index(LabelId label) {
  std::lock_guard lock(mu_);
  return allocate(nodes_, label, kNodeSalt);
}

std::size_t Vocabulary::edge_index(LabelId label) {
  std::lock_guard lock(mu_);
  return allocate(edges_, label, kEdgeSalt);
}

std::span<const double> Vocabulary::node_vector(LabelId label) {
  std::lock_guard lock(mu_);
  return nodes_.rows[allocate(nodes_, label, kNodeSalt)];
}

std::span<const double> Vocabulary::edge_vector(LabelId label) {
  std::lock_guard lock(mu_);
  return edges_.rows[allocate(edges_, label, kEdgeSalt)];
}

std::size_t Vocabulary::node_label_count() const {
  std::lock_guard lock(mu_);
  return nodes_.labels.size();
}

std::size_t Vocabulary::edge_label_count() const {
  std::lock_guard lock(mu_);
  return edges_.labels.size();
}

std::string label_to_string(LabelId id) { return to_hex(id.value); }

LabelId label_from_string(const std::string& text) {
  if (text.size() != 16 ||
      !std::all_of(text.begin(), text.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
      })) {
    throw SchemaError("label must be 16 lowercase hex digits, got '" + text + "'");
  }
  return LabelId{std::stoull(text, nullptr, 16)};
}

json Vocabulary::to_json() const {
  std::lock_guard lock(mu_);
  json doc;
  doc["d"] = dim_;
  doc["seed"] = seed_;
  auto labels = [](const Table& t) {
    json arr = json::array();
    for (LabelId id : t.labels) arr.push_back(label_to_string(id));
    return arr;
  };
  doc["node_labels"] = labels(nodes_);
  doc["edge_labels"] = labels(edges_);
  return doc;
}

Vocabulary Vocabulary::from_json(const json& doc) {
  try {
    Vocabulary v(doc.at("d").get<std::size_t>(), doc.at("seed").get<std::uint64_t>());
    for (const auto& s : doc.at("node_labels")) v.node_index(label_from_string(s.get<std::string>()));
    for (const auto& s : doc.at("edge_labels")) v.edge_index(label_from_string(s.get<std::string>()));
    return v;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid vocabulary document: ") + e.what());
  }
}

std::vector<std::size_t> ProvenanceGraph::edge_sources() const {
  std::vector<std::size_t> out(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) out[i] = edges[i].src;
  return out;
}

std::vector<std::size_t> ProvenanceGraph::edge_targets() const {
  std::vector<std::size_t> out(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) out[i] = edges[i].dst;
  return out;
}

void materialize(ProvenanceGraph& g, Vocabulary& vocab) {
  const std::size_t d = vocab.dim();
  std::sort(g.edges.begin(), g.edges.end(), [](const auto& a, const auto& b) {
    return std::pair(a.src, a.dst) < std::pair(b.src, b.dst);
  });
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    auto& e = g.edges[i];
    if (e.src >= g.num_nodes() || e.dst >= g.num_nodes()) {
      throw ValidationError("edge endpoint outside node set in batch '" + g.batch_id + "'");
    }
    if (i > 0 && g.edges[i - 1].src == e.src && g.edges[i - 1].dst == e.dst) {
      throw ValidationError("duplicate edge pair in reduced graph '" + g.batch_id + "'");
    }
    if (e.labels.empty()) throw ValidationError("edge without labels in batch '" + g.batch_id + "'");
    std::sort(e.labels.begin(), e.labels.end());
    e.labels.erase(std::unique(e.labels.begin(), e.labels.end()), e.labels.end());
  }
  g.node_features = Tensor2(g.num_nodes(), d);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    auto v = vocab.node_vector(g.node_labels[n]);
    std::copy(v.begin(), v.end(), g.node_features.row(n).begin());
  }
  g.edge_features = Tensor2(g.edges.size(), d);
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    auto row = g.edge_features.row(i);
    for (LabelId label : g.edges[i].labels) {
      auto v = vocab.edge_vector(label);
      for (std::size_t j = 0; j < d; ++j) row[j] += v[j];
    }
    const auto count = static_cast<double>(g.edges[i].labels.size());
    for (double& x : row) x /= count;
  }
}

ProvenanceGraph reduce_noise(const MultiGraph& graph, Vocabulary& vocab) {
  ProvenanceGraph out;
  out.batch_id = graph.batch_id;
  out.node_uids = graph.node_uids;
  out.node_labels = graph.node_labels;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<LabelId>> pairs;
  for (const auto& e : graph.edges) pairs[{e.src, e.dst}].push_back(e.label);
  out.edges.reserve(pairs.size());
  for (auto& [key, labels] : pairs) {
    out.edges.push_back({key.first, key.second, std::move(labels)});
  }
  materialize(out, vocab);
  return out;
}

MultiGraph lift(const ProvenanceGraph& graph) {
  MultiGraph g;
  g.batch_id = graph.batch_id;
  g.node_uids = graph.node_uids;
  g.node_labels = graph.node_labels;
  for (const auto& e : graph.edges) {
    for (LabelId label : e.labels) g.edges.push_back({e.src, e.dst, label});
  }
  return g;
}

double edge_reduction_ratio(const MultiGraph& before, const ProvenanceGraph& after) {
  if (before.edges.empty()) return 0.0;
  return 1.0 - static_cast<double>(after.edges.size()) / static_cast<double>(before.edges.size());
}

std::vector<ProvenanceGraph> build_graphs(std::vector<RawEvent> events, Vocabulary& vocab) {
  std::vector<ProvenanceGraph> graphs;
  for (auto& batch : group_by_batch(std::move(events))) {
    graphs.push_back(reduce_noise(build_multigraph(batch.events), vocab));
  }
  return graphs;
}

json graph_to_json(const ProvenanceGraph& graph) {
  json doc;
  doc["batch"] = graph.batch_id;
  json nodes = json::array();
  for (std::size_t n = 0; n < graph.num_nodes(); ++n) {
    nodes.push_back({{"id", graph.node_uids[n]}, {"label", label_to_string(graph.node_labels[n])}});
  }
  doc["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& e : graph.edges) {
    json labels = json::array();
    for (LabelId id : e.labels) labels.push_back(label_to_string(id));
    edges.push_back(
        {{"src", graph.node_uids[e.src]}, {"dst", graph.node_uids[e.dst]}, {"labels", labels}});
  }
  doc["edges"] = std::move(edges);
  return doc;
}

ProvenanceGraph graph_from_json(const json& doc, Vocabulary& vocab) {
  ProvenanceGraph g;
  try {
    g.batch_id = doc.at("batch").get<std::string>();
    std::unordered_map<std::string, std::size_t> ids;
    for (const auto& n : doc.at("nodes")) {
      auto uid = n.at("id").get<std::string>();
      if (!ids.emplace(uid, g.node_uids.size()).second) {
        throw SchemaError("duplicate node id '" + uid + "' in graph '" + g.batch_id + "'");
      }
      g.node_uids.push_back(std::move(uid));
      g.node_labels.push_back(label_from_string(n.at("label").get<std::string>()));
    }
    auto lookup = [&](const std::string& uid) {
      auto it = ids.find(uid);
      if (it == ids.end()) {
        throw SchemaError("edge references unknown node '" + uid + "' in graph '" + g.batch_id + "'");
      }
      return it->second;
    };
    for (const auto& e : doc.at("edges")) {
      ProvenanceGraph::Edge edge{lookup(e.at("src").get<std::string>()),
                                 lookup(e.at("dst").get<std::string>()),
                                 {}};
      for (const auto& l : e.at("labels")) edge.labels.push_back(label_from_string(l.get<std::string>()));
      g.edges.push_back(std::move(edge));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid graph document: ") + e.what());
  }
  materialize(g, vocab);
  return g;
}

}  // namespace provgad
