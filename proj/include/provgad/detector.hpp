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
#include <span>
#include <vector>

#include "json.hpp"
#include "provgad/tensor.hpp"

namespace provgad::detect {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

double euclidean(std::span<const double> a, std::span<const double> b);

// Median-split K-D tree over the rows of a point matrix; the splitting axis
// is depth mod dimension. The tree references the matrix it was built from,
// which must outlive it and stay unchanged.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const Tensor2& points);

  // The k nearest rows in ascending (distance, index) order; exact.
  std::vector<Neighbor> query(std::span<const double> q, std::size_t k) const;

  std::size_t size() const { return order_.size(); }

  // Points the tree at an identical copy of the matrix it was built from.
  void rebind(const Tensor2& points) { points_ = &points; }

 private:
  struct Node {
    std::size_t point;
    std::int64_t left = -1;
    std::int64_t right = -1;
    std::uint32_t axis = 0;
  };

  std::int64_t build(std::size_t begin, std::size_t end, std::size_t depth);

  const Tensor2* points_ = nullptr;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::int64_t root_ = -1;
};

// Memorized benign embeddings and the baseline distance used to normalize scores.
class DetectorState {
 public:
  DetectorState() = default;
  DetectorState(const DetectorState& other) { *this = other; }
  DetectorState& operator=(const DetectorState& other);
  DetectorState(DetectorState&&) noexcept;
  DetectorState& operator=(DetectorState&&) noexcept;

  std::size_t k() const { return k_; }
  std::size_t dim() const { return points_.cols(); }
  std::size_t size() const { return points_.rows(); }
  double dist_bar() const { return dist_bar_; }
  std::optional<std::size_t> capacity() const { return capacity_; }
  std::optional<double> theta() const { return theta_; }
  void set_theta(std::optional<double> theta);
  const Tensor2& points() const { return points_; }
  const std::vector<std::uint64_t>& counters() const { return counters_; }
  const KdTree& tree() const { return tree_; }

  nlohmann::json to_json() const;
  static DetectorState from_json(const nlohmann::json& doc);

 private:
  friend DetectorState fit(const Tensor2& embeddings, std::size_t k);
  friend DetectorState absorb(const DetectorState& state, const Tensor2& new_points,
                              std::size_t capacity);
  friend DetectorState reembed(const DetectorState& state, const Tensor2& points);
  void rebuild();

  std::size_t k_ = 0;
  double dist_bar_ = 0.0;
  std::optional<std::size_t> capacity_;
  std::optional<double> theta_;
  Tensor2 points_;
  std::vector<std::uint64_t> counters_;
  std::uint64_t next_counter_ = 0;
  KdTree tree_;
};

// Requires at least k + 1 points. dist_bar is the mean, over points, of the
// mean distance to their k nearest other points.
DetectorState fit(const Tensor2& embeddings, std::size_t k);

std::vector<Neighbor> knn(const DetectorState& state, std::span<const double> query,
                          std::size_t k);

// Mean distance to the k nearest memorized points divided by dist_bar.
double score(const DetectorState& state, std::span<const double> query);

struct Verdict {
  double score = 0.0;
  bool malicious = false;
  double theta = 0.0;
};

Verdict detect(const DetectorState& state, std::span<const double> query, double theta);
Verdict verdict_for(double score, double theta);

// Smallest threshold on the grid of unique benign scores (plus one step
// above the maximum) whose fraction of scores >= threshold is <= target_fpr.
double select_threshold(std::span<const double> benign_scores, double target_fpr);

// Replaces every memorized point (same count and order, e.g. after the
// encoder changed), keeping insertion counters, and refits the baseline.
DetectorState reembed(const DetectorState& state, const Tensor2& points);

// Appends points, evicts the oldest beyond capacity and refits the baseline.
DetectorState absorb(const DetectorState& state, const Tensor2& new_points, std::size_t capacity);

}  // namespace provgad::detect
