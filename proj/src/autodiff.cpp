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

#include "provgad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "provgad/error.hpp"

namespace provgad {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor2::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2(r, c, std::move(data));
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

namespace ad {
namespace {

const char* op_name(ExprGraph::Op op) {
  using Op = ExprGraph::Op;
  switch (op) {
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kConcatCols: return "concat_cols";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kGroupSoftmax: return "group_softmax";
    case Op::kSigmoid: return "sigmoid";
    case Op::kLog: return "log";
    case Op::kClamp: return "clamp";
    case Op::kPow: return "pow";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMeanRows: return "mean_rows";
    case Op::kCosineRows: return "cosine_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterAddRows: return "scatter_add_rows";
    case Op::kSelectRows: return "select_rows";
  }
  return "?";
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// c += a * b
void matmul_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c += a * b^T
void matmul_bt_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < p; ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += ai[k] * bj[k];
      c(i, j) += s;
    }
  }
}

// c += a^T * b
void matmul_at_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  for (std::size_t k = 0; k < n; ++k) {
    const double* ak = a.row(k).data();
    const double* bk = b.row(k).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < p; ++j) ci[j] += aki * bk[j];
    }
  }
}

inline std::size_t bidx(const Tensor2& b, std::size_t i, std::size_t j) {
  return (b.rows() == 1 ? 0 : i) * b.cols() + (b.cols() == 1 ? 0 : j);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kNormFloor = 1e-12;

}  // namespace

NodeRef ExprGraph::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeRef{nodes_.size() - 1};
}

const ExprGraph::Node& ExprGraph::at(NodeRef n) const {
  if (n.id >= nodes_.size()) throw Error("node reference out of range");
  return nodes_[n.id];
}

std::string ExprGraph::describe(NodeRef n) const {
  const Node& node = at(n);
  std::string s = std::string(op_name(node.op)) + "#" + std::to_string(n.id);
  if (!node.name.empty()) s += "(" + node.name + ")";
  return s + "[" + shape_str(node.rows, node.cols) + "]";
}

NodeRef ExprGraph::parameter(std::string name, Tensor2 value) {
  if (params_.count(name)) throw Error("duplicate parameter name: " + name);
  Node n(Op::kParameter);
  n.rows = value.rows();
  n.cols = value.cols();
  n.name = name;
  n.value = std::move(value);
  const NodeRef ref = push(std::move(n));
  params_.emplace(std::move(name), ref.id);
  return ref;
}

NodeRef ExprGraph::constant(Tensor2 value) {
  Node n(Op::kConstant);
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return push(std::move(n));
}

void ExprGraph::bind(const std::string& name, Tensor2 value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  Node& node = nodes_[it->second];
  if (value.rows() != node.rows || value.cols() != node.cols) {
    throw ShapeError("cannot bind " + shape_str(value.rows(), value.cols()) +
                     " value to parameter " + describe(NodeRef{it->second}));
  }
  node.value = std::move(value);
  evaluated_upto_ = std::min(evaluated_upto_, it->second);
}

const Tensor2& ExprGraph::parameter_value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return nodes_[it->second].value;
}

std::vector<std::string> ExprGraph::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto& [name, id] : params_) names.push_back(name);
  return names;
}

void ExprGraph::check_broadcast(const char* op, NodeRef a, NodeRef b) const {
  const Node& na = at(a);
  const Node& nb = at(b);
  const bool rows_ok = nb.rows == na.rows || nb.rows == 1;
  const bool cols_ok = nb.cols == na.cols || nb.cols == 1;
  if (!rows_ok || !cols_ok) {
    throw ShapeError(std::string(op) + ": incompatible operands " + describe(a) + " and " +
                     describe(b));
  }
}

NodeRef ExprGraph::matmul(NodeRef a, NodeRef b) {
  if (at(a).cols != at(b).rows) {
    throw ShapeError("matmul: incompatible operands " + describe(a) + " and " + describe(b));
  }
  Node n(Op::kMatMul);
  n.rows = at(a).rows;
  n.cols = at(b).cols;
  n.lhs = a.id;
  n.rhs = b.id;
  return push(std::move(n));
}

NodeRef ExprGraph::add(NodeRef a, NodeRef b) {
  check_broadcast("add", a, b);
  Node n(Op::kAdd);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.rhs = b.id;
  return push(std::move(n));
}

NodeRef ExprGraph::mul(NodeRef a, NodeRef b) {
  check_broadcast("mul", a, b);
  Node n(Op::kMul);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.rhs = b.id;
  return push(std::move(n));
}

NodeRef ExprGraph::scale(NodeRef a, double factor) {
  Node n(Op::kScale);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.a = factor;
  return push(std::move(n));
}

NodeRef ExprGraph::add_scalar(NodeRef a, double offset) {
  Node n(Op::kAddScalar);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.a = offset;
  return push(std::move(n));
}

NodeRef ExprGraph::concat_cols(NodeRef a, NodeRef b) {
  if (at(a).rows != at(b).rows) {
    throw ShapeError("concat_cols: row counts differ between " + describe(a) + " and " +
                     describe(b));
  }
  Node n(Op::kConcatCols);
  n.rows = at(a).rows;
  n.cols = at(a).cols + at(b).cols;
  n.lhs = a.id;
  n.rhs = b.id;
  return push(std::move(n));
}

NodeRef ExprGraph::leaky_relu(NodeRef a, double slope) {
  Node n(Op::kLeakyRelu);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.a = slope;
  return push(std::move(n));
}

NodeRef ExprGraph::group_softmax(NodeRef a, std::vector<std::size_t> groups,
                                 std::size_t num_groups) {
  if (at(a).cols != 1 || groups.size() != at(a).rows) {
    throw ShapeError("group_softmax: expected " + std::to_string(groups.size()) +
                     "x1 column, got " + describe(a));
  }
  for (std::size_t g : groups) {
    if (g >= num_groups) throw ShapeError("group_softmax: group id out of range");
  }
  Node n(Op::kGroupSoftmax);
  n.rows = at(a).rows;
  n.cols = 1;
  n.lhs = a.id;
  n.a = static_cast<double>(num_groups);
  n.index = std::make_shared<const std::vector<std::size_t>>(std::move(groups));
  return push(std::move(n));
}

NodeRef ExprGraph::sigmoid(NodeRef a) {
  Node n(Op::kSigmoid);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  return push(std::move(n));
}

NodeRef ExprGraph::log(NodeRef a) {
  Node n(Op::kLog);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  return push(std::move(n));
}

NodeRef ExprGraph::clamp(NodeRef a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo must not exceed hi");
  Node n(Op::kClamp);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.a = lo;
  n.b = hi;
  return push(std::move(n));
}

NodeRef ExprGraph::pow(NodeRef a, double exponent) {
  Node n(Op::kPow);
  n.rows = at(a).rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.a = exponent;
  return push(std::move(n));
}

NodeRef ExprGraph::sum(NodeRef a) {
  Node n(Op::kSum);
  n.rows = 1;
  n.cols = 1;
  n.lhs = a.id;
  return push(std::move(n));
}

NodeRef ExprGraph::mean(NodeRef a) {
  if (at(a).rows * at(a).cols == 0) throw ShapeError("mean: empty operand " + describe(a));
  Node n(Op::kMean);
  n.rows = 1;
  n.cols = 1;
  n.lhs = a.id;
  return push(std::move(n));
}

NodeRef ExprGraph::mean_rows(NodeRef a) {
  if (at(a).rows == 0) throw ShapeError("mean_rows: empty operand " + describe(a));
  Node n(Op::kMeanRows);
  n.rows = 1;
  n.cols = at(a).cols;
  n.lhs = a.id;
  return push(std::move(n));
}

NodeRef ExprGraph::cosine_rows(NodeRef a, NodeRef b) {
  if (at(a).rows != at(b).rows || at(a).cols != at(b).cols) {
    throw ShapeError("cosine_rows: incompatible operands " + describe(a) + " and " +
                     describe(b));
  }
  Node n(Op::kCosineRows);
  n.rows = at(a).rows;
  n.cols = 1;
  n.lhs = a.id;
  n.rhs = b.id;
  return push(std::move(n));
}

NodeRef ExprGraph::gather_rows(NodeRef a, std::vector<std::size_t> index) {
  for (std::size_t i : index) {
    if (i >= at(a).rows) throw ShapeError("gather_rows: index out of range for " + describe(a));
  }
  Node n(Op::kGatherRows);
  n.rows = index.size();
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.index = std::make_shared<const std::vector<std::size_t>>(std::move(index));
  return push(std::move(n));
}

NodeRef ExprGraph::scatter_add_rows(NodeRef a, std::vector<std::size_t> index,
                                    std::size_t rows) {
  if (index.size() != at(a).rows) {
    throw ShapeError("scatter_add_rows: index length does not match " + describe(a));
  }
  for (std::size_t i : index) {
    if (i >= rows) throw ShapeError("scatter_add_rows: target row out of range");
  }
  Node n(Op::kScatterAddRows);
  n.rows = rows;
  n.cols = at(a).cols;
  n.lhs = a.id;
  n.index = std::make_shared<const std::vector<std::size_t>>(std::move(index));
  return push(std::move(n));
}

NodeRef ExprGraph::select_rows(NodeRef a, NodeRef replacement, std::vector<std::uint8_t> mask) {
  const Node& na = at(a);
  const Node& nr = at(replacement);
  if (nr.cols != na.cols || (nr.rows != 1 && nr.rows != na.rows) || mask.size() != na.rows) {
    throw ShapeError("select_rows: incompatible operands " + describe(a) + " and " +
                     describe(replacement));
  }
  Node n(Op::kSelectRows);
  n.rows = na.rows;
  n.cols = na.cols;
  n.lhs = a.id;
  n.rhs = replacement.id;
  n.mask = std::make_shared<const std::vector<std::uint8_t>>(std::move(mask));
  return push(std::move(n));
}

void ExprGraph::forward(Node& node) {
  const Tensor2* x = node.op == Op::kParameter || node.op == Op::kConstant
                         ? nullptr
                         : &nodes_[node.lhs].value;
  Tensor2 out(node.rows, node.cols);
  switch (node.op) {
    case Op::kParameter:
    case Op::kConstant:
      return;
    case Op::kMatMul:
      matmul_acc(*x, nodes_[node.rhs].value, out);
      break;
    case Op::kAdd:
    case Op::kMul: {
      const Tensor2& y = nodes_[node.rhs].value;
      const bool is_add = node.op == Op::kAdd;
      for (std::size_t i = 0; i < node.rows; ++i) {
        for (std::size_t j = 0; j < node.cols; ++j) {
          const double rhs = y[bidx(y, i, j)];
          out(i, j) = is_add ? (*x)(i, j) + rhs : (*x)(i, j) * rhs;
        }
      }
      break;
    }
    case Op::kScale:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*x)[i] * node.a;
      break;
    case Op::kAddScalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*x)[i] + node.a;
      break;
    case Op::kConcatCols: {
      const Tensor2& y = nodes_[node.rhs].value;
      for (std::size_t i = 0; i < node.rows; ++i) {
        auto dst = out.row(i);
        std::copy(x->row(i).begin(), x->row(i).end(), dst.begin());
        std::copy(y.row(i).begin(), y.row(i).end(), dst.begin() + x->cols());
      }
      break;
    }
    case Op::kLeakyRelu:
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (*x)[i] >= 0 ? (*x)[i] : node.a * (*x)[i];
      }
      break;
    case Op::kGroupSoftmax: {
      const auto& groups = *node.index;
      const auto num_groups = static_cast<std::size_t>(node.a);
      std::vector<double> gmax(num_groups, -std::numeric_limits<double>::infinity());
      std::vector<double> gsum(num_groups, 0.0);
      for (std::size_t i = 0; i < groups.size(); ++i) {
        gmax[groups[i]] = std::max(gmax[groups[i]], (*x)[i]);
      }
      for (std::size_t i = 0; i < groups.size(); ++i) {
        out[i] = std::exp((*x)[i] - gmax[groups[i]]);
        gsum[groups[i]] += out[i];
      }
      for (std::size_t i = 0; i < groups.size(); ++i) out[i] /= gsum[groups[i]];
      break;
    }
    case Op::kSigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid((*x)[i]);
      break;
    case Op::kLog:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log((*x)[i]);
      break;
    case Op::kClamp:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((*x)[i], node.a, node.b);
      break;
    case Op::kPow:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow((*x)[i], node.a);
      break;
    case Op::kSum:
    case Op::kMean: {
      double s = 0.0;
      for (double v : x->data()) s += v;
      out[0] = node.op == Op::kSum ? s : s / static_cast<double>(x->size());
      break;
    }
    case Op::kMeanRows: {
      for (std::size_t i = 0; i < x->rows(); ++i) {
        for (std::size_t j = 0; j < x->cols(); ++j) out[j] += (*x)(i, j);
      }
      const double inv = 1.0 / static_cast<double>(x->rows());
      for (double& v : out.data()) v *= inv;
      break;
    }
    case Op::kCosineRows: {
      const Tensor2& y = nodes_[node.rhs].value;
      for (std::size_t i = 0; i < node.rows; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < x->cols(); ++j) {
          dot += (*x)(i, j) * y(i, j);
          na += (*x)(i, j) * (*x)(i, j);
          nb += y(i, j) * y(i, j);
        }
        out[i] = dot / (std::max(std::sqrt(na), kNormFloor) * std::max(std::sqrt(nb), kNormFloor));
      }
      break;
    }
    case Op::kGatherRows: {
      const auto& index = *node.index;
      for (std::size_t k = 0; k < index.size(); ++k) {
        std::copy(x->row(index[k]).begin(), x->row(index[k]).end(), out.row(k).begin());
      }
      break;
    }
    case Op::kScatterAddRows: {
      const auto& index = *node.index;
      for (std::size_t k = 0; k < index.size(); ++k) {
        auto src = x->row(k);
        auto dst = out.row(index[k]);
        for (std::size_t j = 0; j < node.cols; ++j) dst[j] += src[j];
      }
      break;
    }
    case Op::kSelectRows: {
      const Tensor2& r = nodes_[node.rhs].value;
      const auto& mask = *node.mask;
      for (std::size_t i = 0; i < node.rows; ++i) {
        auto src = mask[i] ? r.row(r.rows() == 1 ? 0 : i) : x->row(i);
        std::copy(src.begin(), src.end(), out.row(i).begin());
      }
      break;
    }
  }
  node.value = std::move(out);
}

const Tensor2& ExprGraph::evaluate(NodeRef output) {
  at(output);
  for (std::size_t id = std::min(evaluated_upto_, output.id + 1); id <= output.id; ++id) {
    Node& node = nodes_[id];
    forward(node);
    if (!node.value.all_finite()) {
      evaluated_upto_ = id;
      throw NonFiniteError("non-finite value produced at " + describe(NodeRef{id}));
    }
  }
  evaluated_upto_ = std::max(evaluated_upto_, output.id + 1);
  return nodes_[output.id].value;
}

const Tensor2& ExprGraph::value(NodeRef node) const {
  if (node.id >= evaluated_upto_) throw Error("node not evaluated: " + describe(node));
  return nodes_[node.id].value;
}

void ExprGraph::backward(const Node& node, const Tensor2& g, std::vector<Tensor2>& grads) {
  auto grad_of = [&](std::size_t id) -> Tensor2& {
    Tensor2& t = grads[id];
    if (t.empty() && nodes_[id].rows * nodes_[id].cols > 0) {
      t = Tensor2(nodes_[id].rows, nodes_[id].cols);
    }
    return t;
  };
  const Tensor2& x = nodes_[node.lhs].value;
  switch (node.op) {
    case Op::kParameter:
    case Op::kConstant:
      return;
    case Op::kMatMul: {
      const Tensor2& y = nodes_[node.rhs].value;
      matmul_bt_acc(g, y, grad_of(node.lhs));
      matmul_at_acc(x, g, grad_of(node.rhs));
      return;
    }
    case Op::kAdd:
    case Op::kMul: {
      const Tensor2& y = nodes_[node.rhs].value;
      Tensor2& gx = grad_of(node.lhs);
      Tensor2& gy = grad_of(node.rhs);
      const bool is_add = node.op == Op::kAdd;
      for (std::size_t i = 0; i < node.rows; ++i) {
        for (std::size_t j = 0; j < node.cols; ++j) {
          const std::size_t k = bidx(y, i, j);
          const double gij = g(i, j);
          if (is_add) {
            gx(i, j) += gij;
            gy[k] += gij;
          } else {
            gx(i, j) += gij * y[k];
            gy[k] += gij * x(i, j);
          }
        }
      }
      return;
    }
    case Op::kScale: {
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.a;
      return;
    }
    case Op::kAddScalar: {
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      return;
    }
    case Op::kConcatCols: {
      Tensor2& gx = grad_of(node.lhs);
      Tensor2& gy = grad_of(node.rhs);
      const std::size_t split = x.cols();
      for (std::size_t i = 0; i < node.rows; ++i) {
        for (std::size_t j = 0; j < node.cols; ++j) {
          if (j < split) {
            gx(i, j) += g(i, j);
          } else {
            gy(i, j - split) += g(i, j);
          }
        }
      }
      return;
    }
    case Op::kLeakyRelu: {
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x[i] >= 0 ? g[i] : node.a * g[i];
      return;
    }
    case Op::kGroupSoftmax: {
      const auto& groups = *node.index;
      const auto num_groups = static_cast<std::size_t>(node.a);
      const Tensor2& y = node.value;
      std::vector<double> dot(num_groups, 0.0);
      for (std::size_t i = 0; i < groups.size(); ++i) dot[groups[i]] += y[i] * g[i];
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < groups.size(); ++i) gx[i] += y[i] * (g[i] - dot[groups[i]]);
      return;
    }
    case Op::kSigmoid: {
      const Tensor2& y = node.value;
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::kLog: {
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x[i];
      return;
    }
    case Op::kClamp: {
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] >= node.a && x[i] <= node.b) gx[i] += g[i];
      }
      return;
    }
    case Op::kPow: {
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * node.a * std::pow(x[i], node.a - 1.0);
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      const double d = node.op == Op::kSum ? g[0] : g[0] / static_cast<double>(x.size());
      Tensor2& gx = grad_of(node.lhs);
      for (double& v : gx.data()) v += d;
      return;
    }
    case Op::kMeanRows: {
      const double inv = 1.0 / static_cast<double>(x.rows());
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) += g[j] * inv;
      }
      return;
    }
    case Op::kCosineRows: {
      const Tensor2& y = nodes_[node.rhs].value;
      Tensor2& gx = grad_of(node.lhs);
      Tensor2& gy = grad_of(node.rhs);
      for (std::size_t i = 0; i < node.rows; ++i) {
        double na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
          na += x(i, j) * x(i, j);
          nb += y(i, j) * y(i, j);
        }
        na = std::max(std::sqrt(na), kNormFloor);
        nb = std::max(std::sqrt(nb), kNormFloor);
        const double c = node.value[i];
        const double gi = g[i];
        for (std::size_t j = 0; j < x.cols(); ++j) {
          gx(i, j) += gi * (y(i, j) / (na * nb) - c * x(i, j) / (na * na));
          gy(i, j) += gi * (x(i, j) / (na * nb) - c * y(i, j) / (nb * nb));
        }
      }
      return;
    }
    case Op::kGatherRows: {
      const auto& index = *node.index;
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t k = 0; k < index.size(); ++k) {
        auto dst = gx.row(index[k]);
        auto src = g.row(k);
        for (std::size_t j = 0; j < node.cols; ++j) dst[j] += src[j];
      }
      return;
    }
    case Op::kScatterAddRows: {
      const auto& index = *node.index;
      Tensor2& gx = grad_of(node.lhs);
      for (std::size_t k = 0; k < index.size(); ++k) {
        auto dst = gx.row(k);
        auto src = g.row(index[k]);
        for (std::size_t j = 0; j < node.cols; ++j) dst[j] += src[j];
      }
      return;
    }
    case Op::kSelectRows: {
      const auto& mask = *node.mask;
      Tensor2& gx = grad_of(node.lhs);
      Tensor2& gr = grad_of(node.rhs);
      const bool broadcast = nodes_[node.rhs].rows == 1;
      for (std::size_t i = 0; i < node.rows; ++i) {
        auto src = g.row(i);
        auto dst = mask[i] ? gr.row(broadcast ? 0 : i) : gx.row(i);
        for (std::size_t j = 0; j < node.cols; ++j) dst[j] += src[j];
      }
      return;
    }
  }
}

std::map<std::string, Tensor2> ExprGraph::gradients(NodeRef output) {
  const Node& out = at(output);
  if (out.rows != 1 || out.cols != 1) {
    throw ShapeError("gradients: output must be 1x1, got " + describe(output));
  }
  if (output.id >= evaluated_upto_) evaluate(output);
  std::vector<Tensor2> grads(output.id + 1);
  grads[output.id] = Tensor2(1, 1, 1.0);
  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    backward(nodes_[id], grads[id], grads);
  }
  std::map<std::string, Tensor2> result;
  for (const auto& [name, id] : params_) {
    if (id <= output.id && !grads[id].empty()) {
      result.emplace(name, std::move(grads[id]));
    } else {
      result.emplace(name, Tensor2(nodes_[id].rows, nodes_[id].cols));
    }
  }
  return result;
}

double finite_difference_check(ExprGraph& graph, NodeRef output, double eps) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw ValidationError("eps must lie in (0, 1e-3]");
  graph.evaluate(output);
  const auto analytic = graph.gradients(output);
  double worst = 0.0;
  for (const auto& [name, grad] : analytic) {
    const Tensor2 original = graph.parameter_value(name);
    Tensor2 probe = original;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      probe[i] = original[i] + eps;
      graph.bind(name, probe);
      const double up = graph.evaluate(output)[0];
      probe[i] = original[i] - eps;
      graph.bind(name, probe);
      const double down = graph.evaluate(output)[0];
      probe[i] = original[i];
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(grad[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
    }
    graph.bind(name, original);
  }
  graph.evaluate(output);
  return worst;
}

}  // namespace ad
}  // namespace provgad
