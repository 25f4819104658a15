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
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace provgad::metrics {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// Ratios with an undefined denominator stay empty; they are never reported as 0.
struct Metrics {
  Confusion counts;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> fpr;
  std::optional<double> f1;
  std::optional<double> auc;

  nlohmann::json to_json() const;
};

// malicious[i] is the ground truth for scores[i]; predicted malicious iff score >= theta.
Confusion confusion(std::span<const std::uint8_t> malicious, std::span<const double> scores,
                    double theta);
Metrics from_counts(const Confusion& c);

// Mann-Whitney U / (n_pos * n_neg) with midranks for ties; empty with one class.
std::optional<double> auc(std::span<const std::uint8_t> malicious, std::span<const double> scores);

Metrics compute_metrics(std::span<const std::uint8_t> malicious, std::span<const double> scores,
                        double theta);

}  // namespace provgad::metrics
