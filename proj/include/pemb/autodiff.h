/*
 * Copyright 2026 The pemb Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PEMB_AUTODIFF_H_
#define PEMB_AUTODIFF_H_

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "pemb/tensor.h"

namespace pemb {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddScalar,
  kMatMul,
  kTranspose,
  kExp,
  kLog,
  kPow,
  kRelu,
  kSoftplus,
  kL2Normalize,
  kL2Norm,
  kConcat,
  kSlice,
  kGatherRows,
  kReshape,
  kSum,
  kMean,
  kSumLast,
  kLogSumExpLast,
  kLogBesselI,
  kClamp,
  kArcMargin,
};

// Append-only record of operations over Tensors. Nodes are stored in
// creation order, so inputs always precede the node that consumes them and
// a single reverse sweep computes gradients.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var Constant(Tensor value);
  // A trainable leaf. Its gradient is reported by Gradient().
  Var Parameter(Tensor value, std::string name = "");

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool is_parameter(std::size_t id) const { return nodes_[id].parameter; }
  const std::string& name(std::size_t id) const { return nodes_[id].name; }
  std::vector<Var> parameters();

 private:
  struct Node {
    OpKind op = OpKind::kLeaf;
    std::vector<std::size_t> inputs;
    double attr = 0.0;
    double attr2 = 0.0;
    std::vector<std::size_t> index;
    Tensor value;
    bool parameter = false;
    bool requires_grad = false;
    std::string name;
  };

  Var Push(OpKind op, std::vector<std::size_t> inputs, Tensor value,
           double attr = 0.0, double attr2 = 0.0,
           std::vector<std::size_t> index = {});

  friend class GraphOps;

  std::vector<Node> nodes_;
};

// d(output)/d(parameter) for every parameter of the output's graph.
// Parameters the output does not depend on receive zero gradients.
class Gradients {
 public:
  const Tensor& at(const Var& parameter) const;
  const Tensor& at(const std::string& name) const;
  bool contains(const Var& parameter) const {
    return by_id_.count(parameter.id) > 0;
  }
  const std::unordered_map<std::size_t, Tensor>& by_id() const {
    return by_id_;
  }

 private:
  friend class GraphOps;
  std::unordered_map<std::size_t, Tensor> by_id_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

// Reverse-mode accumulation. The output must hold exactly one value;
// anything else is a ContractError.
Gradients Gradient(const Var& output);

// Elementwise binary ops broadcast under rank <= 2 numpy rules
// (equal shapes, size-1 operands, [C] against [R,C], [R,1] against [R,C]).
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);

// [m,k]x[k,n] -> [m,n]; a rank-1 operand acts as a row (left) or column
// (right) vector and the corresponding output axis is dropped.
Var MatMul(const Var& a, const Var& b);
Var Transpose(const Var& a);
Var Exp(const Var& a);
Var Log(const Var& a);
Var Pow(const Var& a, double exponent);
Var Sqrt(const Var& a);
Var Relu(const Var& a);
Var Softplus(const Var& a);
Var Sigmoid(const Var& a);
// Divides each row (last axis) by its L2 norm. DegenerateInputError on a
// zero row.
Var L2Normalize(const Var& a);
// L2 norm over the last axis; subgradient 0 at the origin.
Var L2Norm(const Var& a);
// Concatenation / slicing / row gathering along the first axis.
Var Concat(const std::vector<Var>& parts);
Var Slice(const Var& a, std::size_t begin, std::size_t end);
Var GatherRows(const Var& a, std::vector<std::size_t> rows);
Var Reshape(const Var& a, Shape shape);
Var Sum(const Var& a);
Var Mean(const Var& a);
// Reductions over the last axis: [R,C] -> [R], [C] -> [1].
Var SumLast(const Var& a);
Var LogSumExpLast(const Var& a);
// Elementwise log I_order(x); the order is a constant.
Var LogBesselI(double order, const Var& x);
// Identity on [lo, hi], constant outside (zero gradient).
Var Clamp(const Var& a, double lo, double hi);
// cos(arccos(clamp(x, -1, 1)) + margin), elementwise.
Var ArcMargin(const Var& a, double margin);

}  // namespace pemb

#endif  // PEMB_AUTODIFF_H_
