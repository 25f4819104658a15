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

#include "provgad/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "provgad/error.hpp"

namespace provgad::metrics {

using nlohmann::json;

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void check_sizes(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw ValidationError("label count " + std::to_string(labels.size()) +
                          " does not match score count " + std::to_string(scores.size()));
  }
}

}  // namespace

Confusion confusion(std::span<const std::uint8_t> malicious, std::span<const double> scores,
                    double theta) {
  check_sizes(malicious, scores);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool flagged = scores[i] >= theta;
    if (malicious[i]) {
      ++(flagged ? c.tp : c.fn);
    } else {
      ++(flagged ? c.fp : c.tn);
    }
  }
  return c;
}

Metrics from_counts(const Confusion& c) {
  Metrics m;
  m.counts = c;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

std::optional<double> auc(std::span<const std::uint8_t> malicious, std::span<const double> scores) {
  check_sizes(malicious, scores);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (malicious[order[t]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double u = pos_rank_sum - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Metrics compute_metrics(std::span<const std::uint8_t> malicious, std::span<const double> scores,
                        double theta) {
  Metrics m = from_counts(confusion(malicious, scores, theta));
  m.auc = auc(malicious, scores);
  return m;
}

json Metrics::to_json() const {
  return {{"tp", counts.tp},       {"fp", counts.fp},   {"tn", counts.tn},
          {"fn", counts.fn},       {"precision", opt(precision)},
          {"recall", opt(recall)}, {"fpr", opt(fpr)},   {"f1", opt(f1)},
          {"auc", opt(auc)}};
}

}  // namespace provgad::metrics
