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
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "provgad/autodiff.hpp"
#include "provgad/graph.hpp"
#include "provgad/rng.hpp"
#include "provgad/tensor.hpp"

namespace provgad::gmae {

struct TrainConfig {
  std::size_t d = 64;
  std::size_t layers = 3;
  double mask_rate = 0.5;
  double gamma = 3.0;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  // Also propagate messages against edge direction. Off by default.
  bool reverse_edges = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
  static TrainConfig from_json(const nlohmann::json& doc, TrainConfig defaults);
};

// Weights of one attention layer, row-vector convention:
//   msg   = [h_src | emb_e] * w_msg            (2d x d)
//   alpha = leaky_relu(h_src * w_as + msg * w_am)   (d x 1 each)
//   h'    = h * w_self + sum_in softmax(alpha) * msg
struct GatLayer {
  Tensor2 w_msg;
  Tensor2 w_as;
  Tensor2 w_am;
  Tensor2 w_self;

  friend bool operator==(const GatLayer&, const GatLayer&) = default;
};

struct ModelParams {
  std::size_t d = 0;
  std::size_t layers = 0;
  std::vector<GatLayer> encoder;
  Tensor2 mask_token;    // 1 x d
  Tensor2 remask_token;  // 1 x D_out
  Tensor2 w_star;        // D_out x d
  GatLayer decoder;
  Tensor2 mlp_w1;  // 2 D_out x d
  Tensor2 mlp_b1;  // 1 x d
  Tensor2 mlp_w2;  // d x 1
  Tensor2 mlp_b2;  // 1 x 1

  // Glorot-uniform weights, zero tokens and biases.
  static ModelParams init(std::size_t d, std::size_t layers, std::uint64_t seed);

  std::size_t output_dim() const { return d * (layers + 1); }

  // Stable (name, tensor) listing used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor2*>> named();
  std::vector<std::pair<std::string, const Tensor2*>> named() const;

  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct OutputEmbeddings {
  Tensor2 node;               // N x D_out, rows h_n = emb_n | h_n^1 | ... | h_n^l
  std::vector<double> state;  // D_out, mean of node rows
};

// Per-layer attention coefficients, one entry per edge of the topology used.
struct EncoderTrace {
  std::vector<std::vector<double>> attention;
};

struct MaskResult {
  std::vector<std::size_t> masked;  // sorted node indices
  std::vector<std::uint8_t> flags;  // flags[n] != 0 iff n is masked
  Tensor2 inputs;                   // x_n, or the mask token for masked nodes
};

MaskResult mask_nodes(const ProvenanceGraph& g, double rate, Rng& rng,
                      const Tensor2& mask_token);

OutputEmbeddings encode(const ProvenanceGraph& g, const Tensor2& inputs,
                        const ModelParams& params, bool reverse_edges = false,
                        EncoderTrace* trace = nullptr);

// Unmasked encoding used for detection.
OutputEmbeddings embed(const ProvenanceGraph& g, const ModelParams& params,
                       bool reverse_edges = false);

struct FeatureReconstruction {
  Tensor2 reconstructed;  // x*, N x d
  double loss = 0.0;
};

FeatureReconstruction decode_features(const OutputEmbeddings& h,
                                      const std::vector<std::size_t>& masked,
                                      const ProvenanceGraph& g, const ModelParams& params,
                                      double gamma, bool reverse_edges = false);

struct StructureSample {
  std::size_t node;
  std::size_t positive;
  std::size_t negative;
  friend bool operator==(const StructureSample&, const StructureSample&) = default;
};

struct StructureSamples {
  std::vector<StructureSample> samples;
  std::size_t skipped = 0;  // eligible nodes without a valid positive or negative
};

// Candidate pools for node n among unmasked nodes: out-neighbors (positives)
// and nodes n has no edge to (negatives). Self is excluded from both.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> structure_pools(
    const ProvenanceGraph& g, const std::vector<std::uint8_t>& masked_flags, std::size_t node);

StructureSamples sample_structure(const ProvenanceGraph& g,
                                  const std::vector<std::uint8_t>& masked_flags, Rng& rng);

double structure_loss(const OutputEmbeddings& h, const std::vector<StructureSample>& samples,
                      const ModelParams& params);

// The full self-supervised objective of one graph as a differentiable
// expression over the named model parameters.
struct LossGraph {
  ad::ExprGraph graph;
  ad::NodeRef total;
  ad::NodeRef feature_loss;    // valid iff has_feature_loss
  ad::NodeRef structure_loss;  // valid iff has_structure_loss
  bool has_feature_loss = false;
  bool has_structure_loss = false;
  bool empty() const { return !has_feature_loss && !has_structure_loss; }
};

LossGraph build_loss_graph(const ProvenanceGraph& g, const ModelParams& params,
                           const MaskResult& mask, const std::vector<StructureSample>& samples,
                           double gamma, bool reverse_edges = false);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // mean loss per epoch
};

// Trains from a fresh initialization (init == nullptr) or continues from the
// given parameters with a fresh optimizer.
TrainResult train(const std::vector<ProvenanceGraph>& graphs, const TrainConfig& cfg,
                  const ModelParams* init = nullptr);

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json checkpoint_to_json(const ModelParams& params, const TrainConfig& cfg,
                                  const std::string& vocabulary_ref);

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  std::string vocabulary_ref;
};

Checkpoint checkpoint_from_json(const nlohmann::json& doc);

}  // namespace provgad::gmae
