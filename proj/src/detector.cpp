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

#include "provgad/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "provgad/error.hpp"

namespace provgad::detect {

using nlohmann::json;

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

double squared(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

}  // namespace

KdTree::KdTree(const Tensor2& points) : points_(&points), order_(points.rows()) {
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(order_.size());
  root_ = build(0, order_.size(), 0);
}

std::int64_t KdTree::build(std::size_t begin, std::size_t end, std::size_t depth) {
  if (begin >= end) return -1;
  const std::size_t dim = points_->cols();
  const auto axis = static_cast<std::uint32_t>(dim == 0 ? 0 : depth % dim);
  const std::size_t mid = begin + (end - begin) / 2;
  if (dim > 0) {
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       const double va = (*points_)(a, axis), vb = (*points_)(b, axis);
                       return va < vb || (va == vb && a < b);
                     });
  }
  const auto id = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back({order_[mid], -1, -1, axis});
  const std::int64_t left = build(begin, mid, depth + 1);
  const std::int64_t right = build(mid + 1, end, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

std::vector<Neighbor> KdTree::query(std::span<const double> q, std::size_t k) const {
  std::vector<Neighbor> out;
  if (k == 0 || root_ < 0) return out;
  if (q.size() != points_->cols()) {
    throw ValidationError("query dimension " + std::to_string(q.size()) +
                          " does not match detector dimension " + std::to_string(points_->cols()));
  }
  std::priority_queue<Candidate> heap;
  auto visit = [&](auto&& self, std::int64_t id) -> void {
    if (id < 0) return;
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const Candidate c{squared(q, points_->row(node.point)), node.point};
    if (heap.size() < k) {
      heap.push(c);
    } else if (c < heap.top()) {
      heap.pop();
      heap.push(c);
    }
    const double diff = q[node.axis] - (*points_)(node.point, node.axis);
    const std::int64_t near = diff < 0 ? node.left : node.right;
    const std::int64_t far = diff < 0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().d2) self(self, far);
  };
  visit(visit, root_);
  std::vector<Candidate> found;
  found.reserve(heap.size());
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::reverse(found.begin(), found.end());
  out.reserve(found.size());
  for (const auto& c : found) out.push_back({c.index, euclidean(q, points_->row(c.index))});
  return out;
}

DetectorState& DetectorState::operator=(const DetectorState& other) {
  if (this == &other) return *this;
  k_ = other.k_;
  dist_bar_ = other.dist_bar_;
  capacity_ = other.capacity_;
  theta_ = other.theta_;
  points_ = other.points_;
  counters_ = other.counters_;
  next_counter_ = other.next_counter_;
  tree_ = other.tree_;
  tree_.rebind(points_);
  return *this;
}

DetectorState::DetectorState(DetectorState&& other) noexcept { *this = std::move(other); }

DetectorState& DetectorState::operator=(DetectorState&& other) noexcept {
  if (this == &other) return *this;
  k_ = other.k_;
  dist_bar_ = other.dist_bar_;
  capacity_ = other.capacity_;
  theta_ = other.theta_;
  points_ = std::move(other.points_);
  counters_ = std::move(other.counters_);
  next_counter_ = other.next_counter_;
  tree_ = std::move(other.tree_);
  tree_.rebind(points_);
  other.tree_ = KdTree();
  return *this;
}

void DetectorState::set_theta(std::optional<double> theta) {
  if (theta && !(std::isfinite(*theta) && *theta > 0.0)) {
    throw ValidationError("theta must be a finite positive number");
  }
  theta_ = theta;
}

void DetectorState::rebuild() {
  if (points_.rows() < k_ + 1) {
    throw ValidationError("detector needs at least k+1 = " + std::to_string(k_ + 1) +
                          " points, got " + std::to_string(points_.rows()));
  }
  tree_ = KdTree(points_);
  double total = 0.0;
  for (std::size_t i = 0; i < points_.rows(); ++i) {
    auto nn = tree_.query(points_.row(i), k_ + 1);
    auto self = std::find_if(nn.begin(), nn.end(), [i](const Neighbor& n) { return n.index == i; });
    nn.erase(self != nn.end() ? self : nn.end() - 1);
    double s = 0.0;
    for (const auto& n : nn) s += n.distance;
    total += s / static_cast<double>(k_);
  }
  dist_bar_ = total / static_cast<double>(points_.rows());
  if (!(dist_bar_ > 0.0)) {
    throw ValidationError("degenerate baseline: all memorized points coincide (dist_bar = 0)");
  }
}

DetectorState fit(const Tensor2& embeddings, std::size_t k) {
  if (k == 0) throw ValidationError("k must be positive");
  if (!embeddings.all_finite()) throw ValidationError("embeddings contain non-finite values");
  DetectorState s;
  s.k_ = k;
  s.points_ = embeddings;
  s.counters_.resize(embeddings.rows());
  std::iota(s.counters_.begin(), s.counters_.end(), std::uint64_t{0});
  s.next_counter_ = embeddings.rows();
  s.rebuild();
  return s;
}

std::vector<Neighbor> knn(const DetectorState& state, std::span<const double> query,
                          std::size_t k) {
  if (query.size() != state.dim()) {
    throw ValidationError("query dimension " + std::to_string(query.size()) +
                          " does not match detector dimension " + std::to_string(state.dim()));
  }
  return state.tree().query(query, k);
}

double score(const DetectorState& state, std::span<const double> query) {
  if (state.size() == 0) throw ValidationError("detector is not fitted");
  const auto nn = knn(state, query, state.k());
  double s = 0.0;
  for (const auto& n : nn) s += n.distance;
  return s / static_cast<double>(nn.size()) / state.dist_bar();
}

Verdict verdict_for(double s, double theta) {
  if (!(std::isfinite(theta) && theta > 0.0)) {
    throw ValidationError("theta must be a finite positive number");
  }
  return {s, s >= theta, theta};
}

Verdict detect(const DetectorState& state, std::span<const double> query, double theta) {
  if (!(std::isfinite(theta) && theta > 0.0)) {
    throw ValidationError("theta must be a finite positive number");
  }
  return verdict_for(score(state, query), theta);
}

double select_threshold(std::span<const double> benign_scores, double target_fpr) {
  if (benign_scores.empty()) throw ValidationError("select_threshold: no benign scores");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
    throw ValidationError("select_threshold: target FPR must lie in (0, 1)");
  }
  std::vector<double> sorted(benign_scores.begin(), benign_scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid = sorted;
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  grid.push_back(std::nextafter(sorted.back(), std::numeric_limits<double>::infinity()));
  const auto n = static_cast<double>(sorted.size());
  for (double theta : grid) {
    const auto flagged = static_cast<double>(
        sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), theta));
    if (flagged / n <= target_fpr) return theta;
  }
  return grid.back();
}

DetectorState absorb(const DetectorState& state, const Tensor2& new_points, std::size_t capacity) {
  if (state.size() == 0) throw ValidationError("absorb: detector is not fitted");
  if (capacity < state.k() + 1) {
    throw ValidationError("absorb: capacity " + std::to_string(capacity) + " is below k+1 = " +
                          std::to_string(state.k() + 1));
  }
  if (new_points.rows() > 0 && new_points.cols() != state.dim()) {
    throw ValidationError("absorb: point dimension does not match the detector");
  }
  const std::size_t total = state.size() + new_points.rows();
  const std::size_t drop = total > capacity ? total - capacity : 0;
  const std::size_t keep = total - drop;
  DetectorState out;
  out.k_ = state.k_;
  out.capacity_ = capacity;
  out.theta_ = state.theta_;
  out.points_ = Tensor2(keep, state.dim());
  out.counters_.reserve(keep);
  std::size_t row = 0;
  for (std::size_t i = drop; i < total; ++i, ++row) {
    const bool old = i < state.size();
    auto src = old ? state.points_.row(i) : new_points.row(i - state.size());
    std::copy(src.begin(), src.end(), out.points_.row(row).begin());
    out.counters_.push_back(old ? state.counters_[i] : state.next_counter_ + (i - state.size()));
  }
  out.next_counter_ = state.next_counter_ + new_points.rows();
  out.rebuild();
  return out;
}

DetectorState reembed(const DetectorState& state, const Tensor2& points) {
  if (points.rows() != state.size() || (points.rows() > 0 && points.cols() != state.dim())) {
    throw ValidationError("reembed: expected " + std::to_string(state.size()) + " points of dimension " +
                          std::to_string(state.dim()));
  }
  DetectorState out = state;
  out.points_ = points;
  out.rebuild();
  return out;
}

json DetectorState::to_json() const {
  json doc;
  doc["format_version"] = 1;
  doc["k"] = k_;
  doc["dim"] = dim();
  doc["dist_bar"] = dist_bar_;
  doc["theta"] = theta_ ? json(*theta_) : json(nullptr);
  doc["capacity"] = capacity_ ? json(*capacity_) : json(nullptr);
  doc["next_counter"] = next_counter_;
  json pts = json::array();
  for (std::size_t i = 0; i < points_.rows(); ++i) {
    pts.push_back(std::vector<double>(points_.row(i).begin(), points_.row(i).end()));
  }
  doc["points"] = std::move(pts);
  doc["insertion_counters"] = counters_;
  return doc;
}

DetectorState DetectorState::from_json(const json& doc) {
  try {
    DetectorState s;
    s.k_ = doc.at("k").get<std::size_t>();
    const auto dim = doc.at("dim").get<std::size_t>();
    s.dist_bar_ = doc.at("dist_bar").get<double>();
    if (!doc.at("theta").is_null()) s.set_theta(doc.at("theta").get<double>());
    if (!doc.at("capacity").is_null()) s.capacity_ = doc.at("capacity").get<std::size_t>();
    s.next_counter_ = doc.at("next_counter").get<std::uint64_t>();
    const json& pts = doc.at("points");
    s.points_ = Tensor2(pts.size(), dim);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].size() != dim) throw SchemaError("detector point has wrong dimension");
      for (std::size_t j = 0; j < dim; ++j) s.points_(i, j) = pts[i][j].get<double>();
    }
    s.counters_ = doc.at("insertion_counters").get<std::vector<std::uint64_t>>();
    if (s.counters_.size() != s.points_.rows()) {
      throw SchemaError("detector counters do not match point count");
    }
    if (s.k_ == 0 || s.points_.rows() < s.k_ + 1 || !(s.dist_bar_ > 0.0)) {
      throw SchemaError("detector snapshot is not a fitted state");
    }
    s.tree_ = KdTree(s.points_);
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid detector snapshot: ") + e.what());
  }
}

}  // namespace provgad::detect
