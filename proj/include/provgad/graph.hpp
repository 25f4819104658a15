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
#include <deque>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "provgad/hash.hpp"
#include "provgad/ingest.hpp"
#include "provgad/tensor.hpp"

namespace provgad {

// Directed multigraph of one batch, before noise reduction. Node ids are
// dense indices in order of first appearance.
struct MultiGraph {
  struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    LabelId label;
  };

  std::string batch_id;
  std::vector<std::string> node_uids;
  std::vector<LabelId> node_labels;
  std::vector<Edge> edges;

  std::size_t num_nodes() const { return node_uids.size(); }
};

// One event becomes one edge. An entity keeps the label it was first seen with.
MultiGraph build_multigraph(std::span<const RawEvent> events);

// Fixed one-to-one map from node/edge labels to d-dimensional vectors.
//
// A label's vector is a pure function of (seed, kind, label): uniform in
// [-1/sqrt(d), 1/sqrt(d)]. Vectors never change once assigned, so rows for
// unseen labels can be allocated lazily at any time. Allocation is
// serialized internally; returned spans stay valid for the lifetime of the
// vocabulary.
class Vocabulary {
 public:
  Vocabulary(std::size_t dim, std::uint64_t seed);
  Vocabulary(const Vocabulary& other);
  Vocabulary& operator=(const Vocabulary& other);

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t node_index(LabelId label);
  std::size_t edge_index(LabelId label);
  std::span<const double> node_vector(LabelId label);
  std::span<const double> edge_vector(LabelId label);

  std::size_t node_label_count() const;
  std::size_t edge_label_count() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

 private:
  struct Table {
    std::unordered_map<LabelId, std::size_t> index;
    std::vector<LabelId> labels;
    std::deque<std::vector<double>> rows;
  };

  std::size_t allocate(Table& table, LabelId label, std::uint64_t salt);

  std::size_t dim_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  Table nodes_;
  Table edges_;
};

// Simple directed graph with initial embeddings, ready for the encoder.
// Edges are sorted by (src, dst); each keeps the sorted set of distinct
// labels merged into it.
struct ProvenanceGraph {
  struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    std::vector<LabelId> labels;
  };

  std::string batch_id;
  std::vector<std::string> node_uids;
  std::vector<LabelId> node_labels;
  std::vector<Edge> edges;
  Tensor2 node_features;  // N x d, row n is the vocabulary vector of node n's label
  Tensor2 edge_features;  // E x d, mean of the vocabulary vectors of the edge's labels

  std::size_t num_nodes() const { return node_uids.size(); }
  std::size_t num_edges() const { return edges.size(); }
  std::vector<std::size_t> edge_sources() const;
  std::vector<std::size_t> edge_targets() const;
};

// Collapses parallel edges: per ordered pair, duplicate labels are dropped
// and the remaining distinct labels merge into one averaged edge.
ProvenanceGraph reduce_noise(const MultiGraph& graph, Vocabulary& vocab);

// Recomputes node and edge features from labels. Edge label sets are
// canonicalized and pairs must already be unique.
void materialize(ProvenanceGraph& graph, Vocabulary& vocab);

// One multigraph edge per (pair, label) of a reduced graph.
MultiGraph lift(const ProvenanceGraph& graph);

// 1 - |after.edges| / |before.edges|, or 0 for an edgeless input.
double edge_reduction_ratio(const MultiGraph& before, const ProvenanceGraph& after);

std::vector<ProvenanceGraph> build_graphs(std::vector<RawEvent> events, Vocabulary& vocab);

// Graph store document; embeddings are not serialized.
nlohmann::json graph_to_json(const ProvenanceGraph& graph);
ProvenanceGraph graph_from_json(const nlohmann::json& doc, Vocabulary& vocab);

std::string label_to_string(LabelId id);
LabelId label_from_string(const std::string& text);

}  // namespace provgad
