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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "provgad/tensor.hpp"

namespace provgad::ad {

struct NodeRef {
  std::size_t id = 0;
};

// Reverse-mode differentiation over a fixed set of dense matrix primitives.
//
// Nodes are appended in construction order, which is also a topological
// order. Shapes are checked when a node is added; values are computed by
// evaluate() and cached for the following gradients() call. Parameters are
// named leaves that can be rebound between evaluations.
//
// Broadcasting rules for add() and mul(): the right operand may have the
// same shape as the left, or be 1 x cols, rows x 1, or 1 x 1.
class ExprGraph {
 public:
  enum class Op : std::uint8_t {
    kParameter,
    kConstant,
    kMatMul,
    kAdd,
    kMul,
    kScale,
    kAddScalar,
    kConcatCols,
    kLeakyRelu,
    kGroupSoftmax,
    kSigmoid,
    kLog,
    kClamp,
    kPow,
    kSum,
    kMean,
    kMeanRows,
    kCosineRows,
    kGatherRows,
    kScatterAddRows,
    kSelectRows,
  };

  NodeRef parameter(std::string name, Tensor2 value);
  NodeRef constant(Tensor2 value);

  // Replaces the value of an existing parameter; the shape must not change.
  void bind(const std::string& name, Tensor2 value);
  const Tensor2& parameter_value(const std::string& name) const;
  std::vector<std::string> parameter_names() const;

  NodeRef matmul(NodeRef a, NodeRef b);
  NodeRef add(NodeRef a, NodeRef b);
  NodeRef mul(NodeRef a, NodeRef b);
  NodeRef scale(NodeRef a, double factor);
  NodeRef add_scalar(NodeRef a, double offset);
  NodeRef concat_cols(NodeRef a, NodeRef b);
  NodeRef leaky_relu(NodeRef a, double slope = 0.2);
  // Softmax of an n x 1 column where entry i belongs to group groups[i].
  NodeRef group_softmax(NodeRef a, std::vector<std::size_t> groups, std::size_t num_groups);
  NodeRef sigmoid(NodeRef a);
  NodeRef log(NodeRef a);
  NodeRef clamp(NodeRef a, double lo, double hi);
  NodeRef pow(NodeRef a, double exponent);
  NodeRef sum(NodeRef a);
  NodeRef mean(NodeRef a);
  NodeRef mean_rows(NodeRef a);
  // Row-wise cosine similarity of two same-shape matrices; result is rows x 1.
  NodeRef cosine_rows(NodeRef a, NodeRef b);
  NodeRef gather_rows(NodeRef a, std::vector<std::size_t> index);
  NodeRef scatter_add_rows(NodeRef a, std::vector<std::size_t> index, std::size_t rows);
  // Row i is replacement's row (or its only row) when mask[i] != 0, else a's row.
  NodeRef select_rows(NodeRef a, NodeRef replacement, std::vector<std::uint8_t> mask);

  const Tensor2& evaluate(NodeRef output);
  // Value cached by the last evaluate() that covered this node.
  const Tensor2& value(NodeRef node) const;

  // d(output)/d(parameter) for every parameter; output must be 1 x 1 and
  // evaluated.
  std::map<std::string, Tensor2> gradients(NodeRef output);

  std::size_t rows(NodeRef n) const { return nodes_.at(n.id).rows; }
  std::size_t cols(NodeRef n) const { return nodes_.at(n.id).cols; }
  std::size_t size() const { return nodes_.size(); }
  std::string describe(NodeRef n) const;

 private:
  struct Node {
    explicit Node(Op o) : op(o) {}
    Op op;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    double a = 0.0;
    double b = 0.0;
    std::string name;
    std::shared_ptr<const std::vector<std::size_t>> index;
    std::shared_ptr<const std::vector<std::uint8_t>> mask;
    Tensor2 value;
  };

  NodeRef push(Node node);
  const Node& at(NodeRef n) const;
  void check_broadcast(const char* op, NodeRef a, NodeRef b) const;
  void forward(Node& node);
  void backward(const Node& node, const Tensor2& grad, std::vector<Tensor2>& grads);

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  std::size_t evaluated_upto_ = 0;  // nodes [0, evaluated_upto_) hold current values
};

// Compares analytic gradients with central finite differences for every
// parameter entry. Returns max |analytic - numeric| / max(1, |analytic|, |numeric|).
// Parameter values are restored before returning.
double finite_difference_check(ExprGraph& graph, NodeRef output, double eps);

}  // namespace provgad::ad
