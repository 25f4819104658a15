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

#include "provgad/gmae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "provgad/error.hpp"
#include "provgad/optimizer.hpp"

namespace provgad::gmae {

using ad::ExprGraph;
using ad::NodeRef;
using nlohmann::json;

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kProbFloor = 1e-7;
constexpr int kNegativeTries = 100;

struct Topology {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> edge_row;
};

Topology topology(const ProvenanceGraph& g, bool reverse_edges) {
  Topology t;
  const std::size_t e = g.num_edges();
  for (std::size_t i = 0; i < e; ++i) {
    t.src.push_back(g.edges[i].src);
    t.dst.push_back(g.edges[i].dst);
    t.edge_row.push_back(i);
  }
  if (reverse_edges) {
    for (std::size_t i = 0; i < e; ++i) {
      t.src.push_back(g.edges[i].dst);
      t.dst.push_back(g.edges[i].src);
      t.edge_row.push_back(i);
    }
  }
  return t;
}

Tensor2 topology_edge_features(const ProvenanceGraph& g, const Topology& t) {
  Tensor2 out(t.edge_row.size(), g.edge_features.cols());
  for (std::size_t k = 0; k < t.edge_row.size(); ++k) {
    auto src = g.edge_features.row(t.edge_row[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

struct LayerRefs {
  NodeRef w_msg, w_as, w_am, w_self;
};

struct ModelRefs {
  std::vector<LayerRefs> encoder;
  NodeRef mask_token, remask_token, w_star;
  LayerRefs decoder;
  NodeRef mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

LayerRefs bind_layer(ExprGraph& eg, const GatLayer& layer, const std::string& prefix) {
  return {eg.parameter(prefix + ".w_msg", layer.w_msg), eg.parameter(prefix + ".w_as", layer.w_as),
          eg.parameter(prefix + ".w_am", layer.w_am), eg.parameter(prefix + ".w_self", layer.w_self)};
}

ModelRefs bind_params(ExprGraph& eg, const ModelParams& p) {
  ModelRefs refs;
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    refs.encoder.push_back(bind_layer(eg, p.encoder[i], "encoder." + std::to_string(i)));
  }
  refs.mask_token = eg.parameter("mask_token", p.mask_token);
  refs.remask_token = eg.parameter("remask_token", p.remask_token);
  refs.w_star = eg.parameter("w_star", p.w_star);
  refs.decoder = bind_layer(eg, p.decoder, "decoder");
  refs.mlp_w1 = eg.parameter("mlp.w1", p.mlp_w1);
  refs.mlp_b1 = eg.parameter("mlp.b1", p.mlp_b1);
  refs.mlp_w2 = eg.parameter("mlp.w2", p.mlp_w2);
  refs.mlp_b2 = eg.parameter("mlp.b2", p.mlp_b2);
  return refs;
}

NodeRef gat_layer(ExprGraph& eg, const LayerRefs& w, NodeRef h, NodeRef edge_emb,
                  const Topology& topo, std::size_t num_nodes, NodeRef* attention) {
  const NodeRef self = eg.matmul(h, w.w_self);
  if (topo.src.empty()) return self;
  const NodeRef hs = eg.gather_rows(h, topo.src);
  const NodeRef msg = eg.matmul(eg.concat_cols(hs, edge_emb), w.w_msg);
  const NodeRef alpha =
      eg.leaky_relu(eg.add(eg.matmul(hs, w.w_as), eg.matmul(msg, w.w_am)), kLeakySlope);
  const NodeRef a = eg.group_softmax(alpha, topo.dst, num_nodes);
  if (attention) *attention = a;
  const NodeRef agg = eg.scatter_add_rows(eg.mul(msg, a), topo.dst, num_nodes);
  return eg.add(self, agg);
}

// Returns the concatenated output rows; attention nodes are appended per layer.
NodeRef encoder_forward(ExprGraph& eg, const ModelRefs& refs, NodeRef inputs, NodeRef edge_emb,
                        const Topology& topo, std::size_t num_nodes,
                        std::vector<NodeRef>* attention) {
  NodeRef h = inputs;
  NodeRef out = inputs;
  for (const auto& layer : refs.encoder) {
    NodeRef att{};
    h = gat_layer(eg, layer, h, edge_emb, topo, num_nodes, &att);
    if (attention && !topo.src.empty()) attention->push_back(att);
    out = eg.concat_cols(out, h);
  }
  return out;
}

NodeRef feature_loss_expr(ExprGraph& eg, const ModelRefs& refs, NodeRef h,
                          const std::vector<std::size_t>& masked, const Tensor2& targets,
                          NodeRef edge_emb, const Topology& topo, std::size_t num_nodes,
                          double gamma, NodeRef* reconstructed) {
  std::vector<std::uint8_t> flags(num_nodes, 0);
  for (std::size_t n : masked) flags[n] = 1;
  const NodeRef remasked = eg.select_rows(h, refs.remask_token, flags);
  const NodeRef hstar = eg.matmul(remasked, refs.w_star);
  const NodeRef xstar = gat_layer(eg, refs.decoder, hstar, edge_emb, topo, num_nodes, nullptr);
  if (reconstructed) *reconstructed = xstar;
  const NodeRef x = eg.gather_rows(eg.constant(targets), masked);
  const NodeRef xs = eg.gather_rows(xstar, masked);
  const NodeRef distance = eg.clamp(eg.add_scalar(eg.scale(eg.cosine_rows(x, xs), -1.0), 1.0), 0.0, 2.0);
  return eg.mean(eg.pow(distance, gamma));
}

NodeRef mlp_prob(ExprGraph& eg, const ModelRefs& refs, NodeRef pairs) {
  const NodeRef hidden =
      eg.leaky_relu(eg.add(eg.matmul(pairs, refs.mlp_w1), refs.mlp_b1), kLeakySlope);
  const NodeRef logit = eg.add(eg.matmul(hidden, refs.mlp_w2), refs.mlp_b2);
  return eg.clamp(eg.sigmoid(logit), kProbFloor, 1.0 - kProbFloor);
}

NodeRef structure_loss_expr(ExprGraph& eg, const ModelRefs& refs, NodeRef h,
                            const std::vector<StructureSample>& samples) {
  std::vector<std::size_t> nodes, pos, neg;
  for (const auto& s : samples) {
    nodes.push_back(s.node);
    pos.push_back(s.positive);
    neg.push_back(s.negative);
  }
  const NodeRef hn = eg.gather_rows(h, nodes);
  const NodeRef p_pos = mlp_prob(eg, refs, eg.concat_cols(hn, eg.gather_rows(h, pos)));
  const NodeRef p_neg = mlp_prob(eg, refs, eg.concat_cols(hn, eg.gather_rows(h, neg)));
  const NodeRef terms = eg.add(eg.log(p_pos), eg.log(eg.add_scalar(eg.scale(p_neg, -1.0), 1.0)));
  return eg.scale(eg.mean(terms), -1.0);
}

Tensor2 glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

GatLayer init_layer(std::size_t d, Rng& rng) {
  GatLayer layer;
  layer.w_msg = glorot(2 * d, d, rng);
  layer.w_as = glorot(d, 1, rng);
  layer.w_am = glorot(d, 1, rng);
  layer.w_self = glorot(d, d, rng);
  return layer;
}

json tensor_to_json(const Tensor2& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    rows.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  }
  return rows;
}

Tensor2 tensor_from_json(const json& rows, std::size_t expect_rows, std::size_t expect_cols,
                         const std::string& name) {
  if (!rows.is_array() || rows.size() != expect_rows) {
    throw SchemaError("tensor '" + name + "' must have " + std::to_string(expect_rows) + " rows");
  }
  Tensor2 t(expect_rows, expect_cols);
  for (std::size_t r = 0; r < expect_rows; ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || row.size() != expect_cols) {
      throw SchemaError("tensor '" + name + "' row " + std::to_string(r) + " must have " +
                        std::to_string(expect_cols) + " columns");
    }
    for (std::size_t c = 0; c < expect_cols; ++c) t(r, c) = row[c].get<double>();
  }
  return t;
}

}  // namespace

void TrainConfig::validate() const {
  if (d < 1) throw ValidationError("d must be at least 1");
  if (layers < 1) throw ValidationError("layers must be at least 1");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ValidationError("mask_rate must lie in (0, 1)");
  if (!(gamma >= 1.0)) throw ValidationError("gamma must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
}

json TrainConfig::to_json() const {
  return {{"d", d},         {"layers", layers},
          {"mask_rate", mask_rate}, {"gamma", gamma},
          {"lr", lr},       {"weight_decay", weight_decay},
          {"epochs", epochs}, {"seed", seed},
          {"reverse_edges", reverse_edges}};
}

TrainConfig TrainConfig::from_json(const json& doc) { return from_json(doc, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const json& doc, TrainConfig c) {
  try {
    c.d = doc.value("d", c.d);
    c.layers = doc.value("layers", c.layers);
    c.mask_rate = doc.value("mask_rate", c.mask_rate);
    c.gamma = doc.value("gamma", c.gamma);
    c.lr = doc.value("lr", c.lr);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.epochs = doc.value("epochs", c.epochs);
    c.seed = doc.value("seed", c.seed);
    c.reverse_edges = doc.value("reverse_edges", c.reverse_edges);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid train config: ") + e.what());
  }
  return c;
}

ModelParams ModelParams::init(std::size_t d, std::size_t layers, std::uint64_t seed) {
  if (d < 1 || layers < 1) throw ValidationError("model needs d >= 1 and layers >= 1");
  Rng rng(seed);
  ModelParams p;
  p.d = d;
  p.layers = layers;
  for (std::size_t i = 0; i < layers; ++i) p.encoder.push_back(init_layer(d, rng));
  const std::size_t out = p.output_dim();
  p.mask_token = Tensor2(1, d);
  p.remask_token = Tensor2(1, out);
  p.w_star = glorot(out, d, rng);
  p.decoder = init_layer(d, rng);
  p.mlp_w1 = glorot(2 * out, d, rng);
  p.mlp_b1 = Tensor2(1, d);
  p.mlp_w2 = glorot(d, 1, rng);
  p.mlp_b2 = Tensor2(1, 1);
  return p;
}

std::vector<std::pair<std::string, const Tensor2*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor2*>> out;
  auto layer = [&out](const std::string& prefix, const GatLayer& l) {
    out.emplace_back(prefix + ".w_msg", &l.w_msg);
    out.emplace_back(prefix + ".w_as", &l.w_as);
    out.emplace_back(prefix + ".w_am", &l.w_am);
    out.emplace_back(prefix + ".w_self", &l.w_self);
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) layer("encoder." + std::to_string(i), encoder[i]);
  out.emplace_back("mask_token", &mask_token);
  out.emplace_back("remask_token", &remask_token);
  out.emplace_back("w_star", &w_star);
  layer("decoder", decoder);
  out.emplace_back("mlp.w1", &mlp_w1);
  out.emplace_back("mlp.b1", &mlp_b1);
  out.emplace_back("mlp.w2", &mlp_w2);
  out.emplace_back("mlp.b2", &mlp_b2);
  return out;
}

std::vector<std::pair<std::string, Tensor2*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor2*>> out;
  for (auto& [name, t] : std::as_const(*this).named()) {
    out.emplace_back(name, const_cast<Tensor2*>(t));
  }
  return out;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : named()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

MaskResult mask_nodes(const ProvenanceGraph& g, double rate, Rng& rng, const Tensor2& mask_token) {
  if (!(rate > 0.0 && rate < 1.0)) throw ValidationError("mask rate must lie in (0, 1)");
  const std::size_t n = g.num_nodes();
  if (n == 0) throw ValidationError("cannot mask an empty graph");
  if (mask_token.rows() != 1 || mask_token.cols() != g.node_features.cols()) {
    throw ShapeError("mask token dimension does not match node features");
  }
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.below(n - i)]);
  }
  MaskResult result;
  result.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(result.masked.begin(), result.masked.end());
  result.flags.assign(n, 0);
  result.inputs = g.node_features;
  for (std::size_t m : result.masked) {
    result.flags[m] = 1;
    std::copy(mask_token.row(0).begin(), mask_token.row(0).end(), result.inputs.row(m).begin());
  }
  return result;
}

OutputEmbeddings encode(const ProvenanceGraph& g, const Tensor2& inputs, const ModelParams& params,
                        bool reverse_edges, EncoderTrace* trace) {
  if (inputs.rows() != g.num_nodes() || inputs.cols() != params.d) {
    throw ShapeError("encode: inputs must be " + std::to_string(g.num_nodes()) + "x" +
                     std::to_string(params.d));
  }
  OutputEmbeddings out;
  if (g.num_nodes() == 0) {
    out.node = Tensor2(0, params.output_dim());
    out.state.assign(params.output_dim(), 0.0);
    return out;
  }
  ExprGraph eg;
  const ModelRefs refs = bind_params(eg, params);
  const Topology topo = topology(g, reverse_edges);
  const NodeRef x = eg.constant(inputs);
  const NodeRef emb = eg.constant(topology_edge_features(g, topo));
  std::vector<NodeRef> attention;
  const NodeRef h = encoder_forward(eg, refs, x, emb, topo, g.num_nodes(), &attention);
  const NodeRef pooled = eg.mean_rows(h);
  eg.evaluate(pooled);
  out.node = eg.value(h);
  const Tensor2& state = eg.value(pooled);
  out.state.assign(state.data().begin(), state.data().end());
  if (trace) {
    trace->attention.clear();
    for (NodeRef a : attention) {
      const Tensor2& v = eg.value(a);
      trace->attention.emplace_back(v.data().begin(), v.data().end());
    }
  }
  return out;
}

OutputEmbeddings embed(const ProvenanceGraph& g, const ModelParams& params, bool reverse_edges) {
  return encode(g, g.node_features, params, reverse_edges);
}

FeatureReconstruction decode_features(const OutputEmbeddings& h,
                                      const std::vector<std::size_t>& masked,
                                      const ProvenanceGraph& g, const ModelParams& params,
                                      double gamma, bool reverse_edges) {
  if (masked.empty()) throw ValidationError("decode_features: the masked set is empty");
  ExprGraph eg;
  const ModelRefs refs = bind_params(eg, params);
  const Topology topo = topology(g, reverse_edges);
  const NodeRef hn = eg.constant(h.node);
  const NodeRef emb = eg.constant(topology_edge_features(g, topo));
  NodeRef xstar{};
  const NodeRef loss = feature_loss_expr(eg, refs, hn, masked, g.node_features, emb, topo,
                                         g.num_nodes(), gamma, &xstar);
  eg.evaluate(loss);
  return {eg.value(xstar), eg.value(loss)[0]};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> structure_pools(
    const ProvenanceGraph& g, const std::vector<std::uint8_t>& masked_flags, std::size_t node) {
  std::vector<std::uint8_t> linked(g.num_nodes(), 0);
  for (const auto& e : g.edges) {
    if (e.src == node) linked[e.dst] = 1;
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t m = 0; m < g.num_nodes(); ++m) {
    if (m == node || masked_flags[m]) continue;
    (linked[m] ? pos : neg).push_back(m);
  }
  return {pos, neg};
}

StructureSamples sample_structure(const ProvenanceGraph& g,
                                  const std::vector<std::uint8_t>& masked_flags, Rng& rng) {
  const std::size_t n = g.num_nodes();
  if (masked_flags.size() != n) throw ShapeError("sample_structure: mask flags size mismatch");
  // Edges are sorted by (src, dst), so each node's out-neighbors are a sorted run.
  std::vector<std::size_t> begin(n + 1, 0);
  for (const auto& e : g.edges) ++begin[e.src + 1];
  for (std::size_t i = 0; i < n; ++i) begin[i + 1] += begin[i];
  std::vector<std::size_t> unmasked;
  for (std::size_t i = 0; i < n; ++i) {
    if (!masked_flags[i]) unmasked.push_back(i);
  }
  auto has_edge = [&](std::size_t s, std::size_t d) {
    auto first = g.edges.begin() + static_cast<std::ptrdiff_t>(begin[s]);
    auto last = g.edges.begin() + static_cast<std::ptrdiff_t>(begin[s + 1]);
    auto it = std::lower_bound(first, last, d,
                               [](const ProvenanceGraph::Edge& e, std::size_t v) { return e.dst < v; });
    return it != last && it->dst == d;
  };

  StructureSamples out;
  if (unmasked.size() < 2) return out;
  std::vector<std::size_t> positives;
  for (std::size_t node : unmasked) {
    positives.clear();
    for (std::size_t k = begin[node]; k < begin[node + 1]; ++k) {
      const std::size_t dst = g.edges[k].dst;
      if (dst != node && !masked_flags[dst]) positives.push_back(dst);
    }
    if (positives.empty()) continue;
    const std::size_t pos = positives[rng.below(positives.size())];
    bool found = false;
    std::size_t neg = 0;
    for (int t = 0; t < kNegativeTries && !found; ++t) {
      neg = unmasked[rng.below(unmasked.size())];
      found = neg != node && !has_edge(node, neg);
    }
    if (!found) {
      ++out.skipped;
      continue;
    }
    out.samples.push_back({node, pos, neg});
  }
  return out;
}

double structure_loss(const OutputEmbeddings& h, const std::vector<StructureSample>& samples,
                      const ModelParams& params) {
  if (samples.empty()) return 0.0;
  ExprGraph eg;
  const ModelRefs refs = bind_params(eg, params);
  const NodeRef loss = structure_loss_expr(eg, refs, eg.constant(h.node), samples);
  return eg.evaluate(loss)[0];
}

LossGraph build_loss_graph(const ProvenanceGraph& g, const ModelParams& params,
                           const MaskResult& mask, const std::vector<StructureSample>& samples,
                           double gamma, bool reverse_edges) {
  LossGraph lg;
  ExprGraph& eg = lg.graph;
  const ModelRefs refs = bind_params(eg, params);
  const Topology topo = topology(g, reverse_edges);
  const NodeRef x = eg.select_rows(eg.constant(g.node_features), refs.mask_token, mask.flags);
  const NodeRef emb = eg.constant(topology_edge_features(g, topo));
  const NodeRef h = encoder_forward(eg, refs, x, emb, topo, g.num_nodes(), nullptr);
  if (!mask.masked.empty()) {
    lg.feature_loss = feature_loss_expr(eg, refs, h, mask.masked, g.node_features, emb, topo,
                                        g.num_nodes(), gamma, nullptr);
    lg.has_feature_loss = true;
  }
  if (!samples.empty()) {
    lg.structure_loss = structure_loss_expr(eg, refs, h, samples);
    lg.has_structure_loss = true;
  }
  if (lg.has_feature_loss && lg.has_structure_loss) {
    lg.total = eg.add(lg.feature_loss, lg.structure_loss);
  } else if (lg.has_feature_loss) {
    lg.total = lg.feature_loss;
  } else if (lg.has_structure_loss) {
    lg.total = lg.structure_loss;
  }
  return lg;
}

TrainResult train(const std::vector<ProvenanceGraph>& graphs, const TrainConfig& cfg,
                  const ModelParams* init) {
  cfg.validate();
  if (graphs.empty()) throw ValidationError("train: no graphs supplied");
  for (const auto& g : graphs) {
    if (g.num_nodes() < 2) {
      throw ValidationError("train: graph '" + g.batch_id + "' has fewer than 2 nodes");
    }
    if (g.node_features.cols() != cfg.d) {
      throw ShapeError("train: graph '" + g.batch_id + "' features are not " +
                       std::to_string(cfg.d) + "-dimensional");
    }
  }
  TrainResult result;
  if (init) {
    if (init->d != cfg.d || init->layers != cfg.layers) {
      throw ValidationError("train: initial parameters do not match the configured d/layers");
    }
    result.params = *init;
  } else {
    result.params = ModelParams::init(cfg.d, cfg.layers, mix_seed(cfg.seed, 1));
  }
  Rng rng(mix_seed(cfg.seed, 2));
  AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t gi : order) {
      const ProvenanceGraph& g = graphs[gi];
      const MaskResult mask = mask_nodes(g, cfg.mask_rate, rng, result.params.mask_token);
      const StructureSamples samples = sample_structure(g, mask.flags, rng);
      LossGraph lg =
          build_loss_graph(g, result.params, mask, samples.samples, cfg.gamma, cfg.reverse_edges);
      if (lg.empty()) continue;
      double loss = 0.0;
      try {
        loss = lg.graph.evaluate(lg.total)[0];
      } catch (const NonFiniteError& e) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch + 1) +
                              " on graph '" + g.batch_id + "': " + e.what());
      }
      const auto grads = lg.graph.gradients(lg.total);
      for (auto& [name, tensor] : result.params.named()) opt.step(name, *tensor, grads.at(name));
      opt.advance();
      if (!result.params.all_finite()) {
        throw DivergenceError("parameters became non-finite in epoch " + std::to_string(epoch + 1));
      }
      total += loss;
      ++steps;
    }
    result.loss_trace.push_back(steps ? total / static_cast<double>(steps) : 0.0);
  }
  return result;
}

json checkpoint_to_json(const ModelParams& params, const TrainConfig& cfg,
                        const std::string& vocabulary_ref) {
  json tensors = json::object();
  for (const auto& [name, t] : params.named()) tensors[name] = tensor_to_json(*t);
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["config"] = cfg.to_json();
  doc["vocabulary"] = vocabulary_ref;
  doc["tensors"] = std::move(tensors);
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw SchemaError("unsupported checkpoint format version");
    }
    Checkpoint cp;
    cp.config = TrainConfig::from_json(doc.at("config"));
    cp.config.validate();
    cp.vocabulary_ref = doc.at("vocabulary").get<std::string>();
    cp.params = ModelParams::init(cp.config.d, cp.config.layers, 0);
    const json& tensors = doc.at("tensors");
    for (auto& [name, t] : cp.params.named()) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw SchemaError("checkpoint is missing tensor '" + name + "'");
      *t = tensor_from_json(*it, t->rows(), t->cols(), name);
    }
    return cp;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid checkpoint: ") + e.what());
  }
}

}  // namespace provgad::gmae
