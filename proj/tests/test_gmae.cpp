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
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "provgad/error.hpp"
#include "provgad/gmae.hpp"
#include "provgad/harness.hpp"

using namespace provgad;
using namespace provgad::gmae;

namespace {

RawEvent ev(std::size_t s, std::size_t d, std::size_t e) {
  return {"n" + std::to_string(s), hash_label({"t" + std::to_string(s % 3)}), "n" + std::to_string(d),
          hash_label({"t" + std::to_string(d % 3)}), hash_label({"e" + std::to_string(e)}), "g"};
}

ProvenanceGraph random_graph(Rng& rng, std::size_t nodes, std::size_t events, Vocabulary& vocab) {
  std::vector<RawEvent> evs;
  for (std::size_t i = 0; i < nodes; ++i) evs.push_back(ev(i, (i + 1) % nodes, rng.below(3)));
  for (std::size_t i = 0; i < events; ++i) evs.push_back(ev(rng.below(nodes), rng.below(nodes), rng.below(3)));
  return reduce_noise(build_multigraph(evs), vocab);
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  Tensor2 c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

double leaky(double x) { return x > 0 ? x : 0.2 * x; }

// Per-edge recomputation of one attention layer.
Tensor2 layer_oracle(const ProvenanceGraph& g, const Tensor2& h, const GatLayer& w,
                     std::vector<double>* attention = nullptr) {
  const std::size_t d = w.w_self.cols();
  const std::size_t e_count = g.num_edges();
  std::vector<std::vector<double>> msg(e_count, std::vector<double>(d, 0.0));
  std::vector<double> alpha(e_count, 0.0);
  for (std::size_t e = 0; e < e_count; ++e) {
    const std::size_t s = g.edges[e].src;
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < h.cols(); ++k) v += h(s, k) * w.w_msg(k, j);
      for (std::size_t k = 0; k < d; ++k) v += g.edge_features(e, k) * w.w_msg(h.cols() + k, j);
      msg[e][j] = v;
    }
    double a = 0.0;
    for (std::size_t k = 0; k < h.cols(); ++k) a += h(s, k) * w.w_as(k, 0);
    for (std::size_t k = 0; k < d; ++k) a += msg[e][k] * w.w_am(k, 0);
    alpha[e] = leaky(a);
  }
  Tensor2 out = matmul(h, w.w_self);
  std::vector<double> att(e_count, 0.0);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    double mx = -INFINITY;
    for (std::size_t e = 0; e < e_count; ++e)
      if (g.edges[e].dst == n) mx = std::max(mx, alpha[e]);
    double z = 0.0;
    for (std::size_t e = 0; e < e_count; ++e)
      if (g.edges[e].dst == n) z += std::exp(alpha[e] - mx);
    for (std::size_t e = 0; e < e_count; ++e) {
      if (g.edges[e].dst != n) continue;
      att[e] = std::exp(alpha[e] - mx) / z;
      for (std::size_t j = 0; j < d; ++j) out(n, j) += att[e] * msg[e][j];
    }
  }
  if (attention) *attention = att;
  return out;
}

Tensor2 encode_oracle(const ProvenanceGraph& g, const Tensor2& inputs, const ModelParams& p) {
  Tensor2 out(g.num_nodes(), p.output_dim());
  Tensor2 h = inputs;
  for (std::size_t l = 0; l <= p.layers; ++l) {
    if (l > 0) h = layer_oracle(g, h, p.encoder[l - 1]);
    for (std::size_t n = 0; n < g.num_nodes(); ++n)
      for (std::size_t j = 0; j < p.d; ++j) out(n, l * p.d + j) = h(n, j);
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void randomize(ModelParams& p, Rng& rng) {
  for (auto& [name, t] : p.named())
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-1.0, 1.0);
}

// Relabels node n to perm[n] and re-sorts edges.
ProvenanceGraph permute(const ProvenanceGraph& g, const std::vector<std::size_t>& perm, Vocabulary& vocab) {
  ProvenanceGraph out;
  out.batch_id = g.batch_id;
  out.node_uids.resize(g.num_nodes());
  out.node_labels.resize(g.num_nodes());
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    out.node_uids[perm[n]] = "relabeled-" + g.node_uids[n];
    out.node_labels[perm[n]] = g.node_labels[n];
  }
  for (const auto& e : g.edges) out.edges.push_back({perm[e.src], perm[e.dst], e.labels});
  std::sort(out.edges.begin(), out.edges.end(),
            [](const auto& a, const auto& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
  materialize(out, vocab);
  return out;
}

std::vector<ProvenanceGraph> small_corpus(std::size_t d, std::uint64_t seed, Vocabulary& vocab) {
  harness::ScenarioSpec spec;
  spec.scenarios = 5;
  spec.graphs_per_scenario = 10;
  spec.min_nodes = 20;
  spec.max_nodes = 30;
  spec.attack_scenarios = {};
  spec.seed = seed;
  (void)d;
  const auto corpus = harness::gen_corpus(spec);
  return build_graphs(parse_lines(corpus.lines, LogFormat::kStreamSpot), vocab);
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.mask_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.gamma = 0.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.d = 7;
  c.seed = 99;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("parameter shapes") {
  const ModelParams p = ModelParams::init(4, 3, 1);
  CHECK(p.output_dim() == 16);
  CHECK(p.encoder.size() == 3);
  CHECK(p.encoder[0].w_msg.rows() == 8);
  CHECK(p.encoder[0].w_msg.cols() == 4);
  CHECK(p.encoder[0].w_as.rows() == 4);
  CHECK(p.encoder[0].w_self.rows() == 4);
  CHECK(p.mask_token.cols() == 4);
  CHECK(p.remask_token.cols() == 16);
  CHECK(p.w_star.rows() == 16);
  CHECK(p.w_star.cols() == 4);
  CHECK(p.mlp_w1.rows() == 32);
  CHECK(p.mlp_w2.rows() == 4);
  CHECK(p.mlp_b2.size() == 1);
  CHECK(p.mask_token == Tensor2(1, 4));
  CHECK(p.remask_token == Tensor2(1, 16));
  const double bound = std::sqrt(6.0 / 12.0);
  for (double v : p.encoder[0].w_msg.data()) CHECK(std::abs(v) <= bound);
  CHECK(ModelParams::init(64, 3, 0).output_dim() == 256);
}

TEST_CASE("mask_nodes") {
  Rng rng(1);
  Vocabulary vocab(4, 1);
  const ProvenanceGraph g = random_graph(rng, 10, 10, vocab);
  Tensor2 token(1, 4, 0.5);
  Rng r1(7), r2(7);
  const MaskResult a = mask_nodes(g, 0.5, r1, token);
  const MaskResult b = mask_nodes(g, 0.5, r2, token);
  CHECK(a.masked.size() == 5);
  CHECK(a.masked == b.masked);
  for (std::size_t n = 0; n < 10; ++n) {
    const bool masked = std::binary_search(a.masked.begin(), a.masked.end(), n);
    CHECK((a.flags[n] != 0) == masked);
    for (std::size_t k = 0; k < 4; ++k) CHECK(a.inputs(n, k) == (masked ? 0.5 : g.node_features(n, k)));
  }
  const MaskResult none = mask_nodes(g, 0.01, r1, token);
  CHECK(none.masked.empty());
  CHECK(none.inputs == g.node_features);
  CHECK_THROWS_AS(mask_nodes(g, 0.0, r1, token), ValidationError);
}

TEST_CASE("encode matches the per-edge oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Vocabulary vocab(5, seed);
    const ProvenanceGraph g = random_graph(rng, 8, 12, vocab);
    ModelParams p = ModelParams::init(5, 2, seed);
    randomize(p, rng);
    EncoderTrace trace;
    const OutputEmbeddings h = encode(g, g.node_features, p, false, &trace);
    CHECK(max_abs_diff(h.node, encode_oracle(g, g.node_features, p)) < 1e-10);

    std::vector<double> att;
    layer_oracle(g, g.node_features, p.encoder[0], &att);
    REQUIRE(trace.attention.size() == 2);
    for (std::size_t e = 0; e < att.size(); ++e) CHECK(std::abs(trace.attention[0][e] - att[e]) < 1e-10);

    // Attention sums to one per destination with in-edges.
    for (const auto& layer : trace.attention) {
      std::vector<double> total(g.num_nodes(), 0.0);
      std::vector<std::size_t> indeg(g.num_nodes(), 0);
      for (std::size_t e = 0; e < g.num_edges(); ++e) {
        total[g.edges[e].dst] += layer[e];
        ++indeg[g.edges[e].dst];
      }
      for (std::size_t n = 0; n < g.num_nodes(); ++n) {
        if (indeg[n] == 0) continue;
        CHECK(std::abs(total[n] - 1.0) < 1e-12);
        if (indeg[n] == 1) {
          for (std::size_t e = 0; e < g.num_edges(); ++e)
            if (g.edges[e].dst == n) CHECK(layer[e] == 1.0);
        }
      }
    }

    // State is the node mean.
    for (std::size_t j = 0; j < p.output_dim(); ++j) {
      double m = 0.0;
      for (std::size_t n = 0; n < g.num_nodes(); ++n) m += h.node(n, j);
      CHECK(std::abs(h.state[j] - m / g.num_nodes()) < 1e-10);
    }
  }
}

TEST_CASE("single node without edges") {
  Vocabulary vocab(3, 1);
  ProvenanceGraph g;
  g.batch_id = "solo";
  g.node_uids = {"only"};
  g.node_labels = {hash_label({"p"})};
  materialize(g, vocab);
  Rng rng(2);
  ModelParams p = ModelParams::init(3, 1, 4);
  randomize(p, rng);
  const OutputEmbeddings h = embed(g, p);
  const Tensor2 self = matmul(g.node_features, p.encoder[0].w_self);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(h.node(0, j) == g.node_features(0, j));
    CHECK(std::abs(h.node(0, 3 + j) - self(0, j)) < 1e-15);
  }
  for (std::size_t j = 0; j < 6; ++j) CHECK(h.state[j] == h.node(0, j));
}

TEST_CASE("embedding is pure, equivariant and isomorphism invariant") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Vocabulary vocab(4, seed);
    const ProvenanceGraph g = random_graph(rng, 9, 15, vocab);
    ModelParams p = ModelParams::init(4, 2, seed);
    randomize(p, rng);
    const OutputEmbeddings a = embed(g, p);
    const OutputEmbeddings b = embed(g, p);
    CHECK(a.node == b.node);
    CHECK(a.state == b.state);

    std::vector<std::size_t> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const OutputEmbeddings c = embed(permute(g, perm, vocab), p);
    for (std::size_t n = 0; n < g.num_nodes(); ++n)
      for (std::size_t j = 0; j < p.output_dim(); ++j) CHECK(std::abs(c.node(perm[n], j) - a.node(n, j)) < 1e-10);
    for (std::size_t j = 0; j < p.output_dim(); ++j) CHECK(std::abs(c.state[j] - a.state[j]) < 1e-10);
  }
}

TEST_CASE("decode_features matches the oracle and the direct loss formula") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Vocabulary vocab(4, seed);
    const ProvenanceGraph g = random_graph(rng, 8, 10, vocab);
    ModelParams p = ModelParams::init(4, 2, seed);
    randomize(p, rng);
    const MaskResult mask = mask_nodes(g, 0.5, rng, p.mask_token);
    const OutputEmbeddings h = encode(g, mask.inputs, p);

    Tensor2 hstar(g.num_nodes(), p.output_dim());
    for (std::size_t n = 0; n < g.num_nodes(); ++n)
      for (std::size_t j = 0; j < p.output_dim(); ++j) hstar(n, j) = mask.flags[n] ? p.remask_token[j] : h.node(n, j);
    const Tensor2 expect = layer_oracle(g, matmul(hstar, p.w_star), p.decoder);

    for (double gamma : {1.0, 3.0}) {
      const FeatureReconstruction fr = decode_features(h, mask.masked, g, p, gamma);
      CHECK(max_abs_diff(fr.reconstructed, expect) < 1e-10);
      double loss = 0.0;
      for (std::size_t m : mask.masked)
        loss += std::pow(1.0 - cosine(g.node_features.row(m), fr.reconstructed.row(m)), gamma);
      CHECK(std::abs(fr.loss - loss / mask.masked.size()) < 1e-12);
    }
  }
}

TEST_CASE("feature reconstruction loss examples") {
  Vocabulary vocab(2, 3);
  std::vector<RawEvent> evs = {ev(0, 1, 0)};
  const ProvenanceGraph g = reduce_noise(build_multigraph(evs), vocab);
  ModelParams p = ModelParams::init(2, 1, 1);
  p.decoder.w_msg = Tensor2(4, 2);
  p.decoder.w_as = Tensor2(2, 1);
  p.decoder.w_am = Tensor2(2, 1);
  p.decoder.w_self = Tensor2::identity(2);
  p.w_star = Tensor2(4, 2);
  p.w_star(0, 0) = p.w_star(1, 1) = 1.0;
  const OutputEmbeddings h = embed(g, p);

  for (std::size_t j = 0; j < 2; ++j) p.remask_token[j] = g.node_features(1, j);
  CHECK(std::abs(decode_features(h, {1}, g, p, 3.0).loss) < 1e-12);
  for (std::size_t j = 0; j < 2; ++j) p.remask_token[j] = -g.node_features(1, j);
  CHECK(decode_features(h, {1}, g, p, 3.0).loss == doctest::Approx(8.0).epsilon(1e-12));
  CHECK_THROWS_AS(decode_features(h, {}, g, p, 3.0), ValidationError);
}

TEST_CASE("structure pools and sampling") {
  Vocabulary vocab(2, 1);
  // Star: center 0 points at leaves 1..3.
  const ProvenanceGraph star = reduce_noise(build_multigraph(std::vector<RawEvent>{ev(0, 1, 0), ev(0, 2, 0), ev(0, 3, 0)}), vocab);
  const std::vector<std::uint8_t> none(4, 0);
  auto [pos0, neg0] = structure_pools(star, none, 0);
  CHECK(pos0 == std::vector<std::size_t>{1, 2, 3});
  CHECK(neg0.empty());
  for (std::size_t leaf = 1; leaf <= 3; ++leaf) {
    auto [pos, neg] = structure_pools(star, none, leaf);
    CHECK(pos.empty());
    std::vector<std::size_t> expect;
    for (std::size_t n = 0; n < 4; ++n)
      if (n != leaf) expect.push_back(n);
    CHECK(neg == expect);
  }
  Rng rng(1);
  const StructureSamples s = sample_structure(star, none, rng);
  CHECK(s.samples.empty());
  CHECK(s.skipped == 1);

  // Complete digraph: no negatives anywhere.
  std::vector<RawEvent> full;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      if (a != b) full.push_back(ev(a, b, 0));
  const ProvenanceGraph complete = reduce_noise(build_multigraph(full), vocab);
  CHECK(sample_structure(complete, none, rng).samples.empty());

  // Samples respect the pools; masked nodes never appear.
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng r(seed);
    const ProvenanceGraph g = random_graph(r, 10, 8, vocab);
    const MaskResult mask = mask_nodes(g, 0.3, r, Tensor2(1, 2));
    Rng ra(seed), rb(seed);
    const StructureSamples a = sample_structure(g, mask.flags, ra);
    CHECK(a.samples == sample_structure(g, mask.flags, rb).samples);
    for (const auto& smp : a.samples) {
      auto [pos, neg] = structure_pools(g, mask.flags, smp.node);
      CHECK(!mask.flags[smp.node]);
      CHECK(std::count(pos.begin(), pos.end(), smp.positive) == 1);
      CHECK(std::count(neg.begin(), neg.end(), smp.negative) == 1);
    }
  }
}

TEST_CASE("structure loss examples") {
  ModelParams p = ModelParams::init(1, 1, 1);
  p.mlp_w1 = Tensor2(4, 1);
  p.mlp_b1 = Tensor2(1, 1);
  p.mlp_w2 = Tensor2(1, 1);
  p.mlp_b2 = Tensor2(1, 1);
  OutputEmbeddings h;
  h.node = Tensor2::from_rows({{0.0, 0.0}, {100.0, 0.0}, {-100.0, 0.0}});
  const std::vector<StructureSample> samples = {{0, 1, 2}, {1, 1, 2}};
  CHECK(structure_loss(h, samples, p) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(structure_loss(h, {}, p) == 0.0);

  // Second pair member drives the logit: saturated on both sides, then clamped.
  p.mlp_w1(2, 0) = 1.0;
  p.mlp_w2(0, 0) = 1.0;
  const double floor = -2.0 * std::log(1.0 - 1e-7);
  CHECK(std::abs(structure_loss(h, samples, p) - floor) < 1e-12);
  CHECK(structure_loss(h, samples, p) < 1e-5);
}

TEST_CASE("loss gradients match finite differences") {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Vocabulary vocab(4, seed);
    const ProvenanceGraph g = random_graph(rng, 8, 8, vocab);
    ModelParams p = ModelParams::init(4, 2, seed);
    randomize(p, rng);
    for (auto& [name, t] : p.named())
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= 0.5;
    const MaskResult mask = mask_nodes(g, 0.5, rng, p.mask_token);
    const auto samples = sample_structure(g, mask.flags, rng).samples;
    LossGraph lg = build_loss_graph(g, p, mask, samples, 3.0);
    REQUIRE(lg.has_feature_loss);
    lg.graph.evaluate(lg.total);
    worst = std::max(worst, ad::finite_difference_check(lg.graph, lg.total, 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("train contracts") {
  Vocabulary vocab(8, 1);
  const auto graphs = small_corpus(8, 11, vocab);
  REQUIRE(graphs.size() == 50);
  TrainConfig cfg;
  cfg.d = 8;
  cfg.layers = 2;
  cfg.seed = 5;
  cfg.epochs = 0;
  CHECK(train(graphs, cfg).params == ModelParams::init(8, 2, mix_seed(5, 1)));

  cfg.epochs = 2;
  const TrainResult a = train(graphs, cfg);
  const TrainResult b = train(graphs, cfg);
  CHECK(a.params == b.params);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.loss_trace.size() == 2);

  const TrainResult cont = train(graphs, cfg, &a.params);
  CHECK(!(cont.params == a.params));

  TrainConfig wrong = cfg;
  wrong.layers = 3;
  CHECK_THROWS_AS(train(graphs, wrong, &a.params), ValidationError);
  CHECK_THROWS_AS(train({}, cfg), ValidationError);
}

TEST_CASE("loss trace regression on a seeded 50-graph corpus") {
  Vocabulary vocab(16, 1);
  const auto graphs = small_corpus(16, 21, vocab);
  TrainConfig cfg;
  cfg.d = 16;
  cfg.layers = 2;
  cfg.epochs = 30;
  cfg.seed = 3;
  const TrainResult r = train(graphs, cfg);
  std::string trace;
  for (double v : r.loss_trace) trace += std::to_string(v) + " ";
  INFO("loss trace: " << trace);
  // Each epoch draws fresh masks, so the per-epoch mean is noisy; the fixture
  // checks that nothing after epoch 3 climbs back above it and that the trend
  // is downward.
  const auto& t = r.loss_trace;
  for (std::size_t e = 3; e < t.size(); ++e) CHECK(t[e] <= t[2]);
  double mx = 0.0, my = 0.0;
  for (std::size_t e = 2; e < t.size(); ++e) {
    mx += static_cast<double>(e);
    my += t[e];
  }
  const double m = static_cast<double>(t.size() - 2);
  mx /= m;
  my /= m;
  double sxy = 0.0;
  for (std::size_t e = 2; e < t.size(); ++e) sxy += (static_cast<double>(e) - mx) * (t[e] - my);
  CHECK(sxy < 0.0);
  CHECK(t.back() < 0.5 * t.front());
}

TEST_CASE("checkpoint round trip is byte identical") {
  Rng rng(4);
  ModelParams p = ModelParams::init(3, 2, 8);
  randomize(p, rng);
  p.encoder[0].w_msg[0] = 0.1 + 0.2;
  p.encoder[0].w_msg[1] = -1e-300;
  TrainConfig cfg;
  cfg.d = 3;
  cfg.layers = 2;
  const std::string text = checkpoint_to_json(p, cfg, "vocab.json").dump();
  const Checkpoint back = checkpoint_from_json(nlohmann::json::parse(text));
  CHECK(back.params == p);
  CHECK(back.vocabulary_ref == "vocab.json");
  CHECK(checkpoint_to_json(back.params, back.config, back.vocabulary_ref).dump() == text);

  nlohmann::json broken = nlohmann::json::parse(text);
  broken["format_version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(broken), SchemaError);
}
