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

#include "pemb/autodiff.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pemb/errors.h"
#include "pemb/special.h"

namespace pemb {
namespace {

const char* OpName(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kPow: return "pow";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kL2Normalize: return "l2_normalize";
    case OpKind::kL2Norm: return "l2_norm";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSumLast: return "sum_last";
    case OpKind::kLogSumExpLast: return "log_sum_exp";
    case OpKind::kLogBesselI: return "log_bessel_i";
    case OpKind::kClamp: return "clamp";
    case OpKind::kArcMargin: return "arc_margin";
  }
  return "?";
}

// Operand layout under broadcasting: element (r, c) of the output reads
// index r * row_stride + c * col_stride of the operand.
struct Strides {
  std::size_t row_stride;
  std::size_t col_stride;
};

struct Broadcast {
  Shape shape;
  std::size_t rows;
  std::size_t cols;
  Strides a;
  Strides b;
};

Strides StridesFor(const Shape& s, std::size_t rows, std::size_t cols,
                   bool out_rank2) {
  const std::size_t n = NumElements(s);
  if (n == 1) return {0, 0};
  if (s.size() == 1) {
    if (s[0] == cols) return {0, 1};
    // A rank-1 operand against rank-1 output of equal length.
    if (!out_rank2 && s[0] == cols) return {0, 1};
  } else if (s.size() == 2) {
    if (s[0] == rows && s[1] == cols) return {cols, 1};
    if (s[0] == rows && s[1] == 1) return {1, 0};
    if (s[0] == 1 && s[1] == cols) return {0, 1};
  }
  return {SIZE_MAX, SIZE_MAX};
}

Broadcast BroadcastShapes(const Shape& a, const Shape& b, const char* op) {
  Broadcast out;
  if (a == b) {
    out.shape = a;
  } else if (NumElements(b) == 1) {
    out.shape = a;
  } else if (NumElements(a) == 1) {
    out.shape = b;
  } else if (a.size() <= 2 && b.size() <= 2) {
    // Right-aligned numpy rule restricted to rank <= 2.
    const std::size_t ar = a.size() == 2 ? a[0] : 1;
    const std::size_t ac = a.back();
    const std::size_t br = b.size() == 2 ? b[0] : 1;
    const std::size_t bc = b.back();
    const std::size_t r = std::max(ar, br);
    const std::size_t c = std::max(ac, bc);
    if ((ar != r && ar != 1) || (br != r && br != 1) || (ac != c && ac != 1) ||
        (bc != c && bc != 1)) {
      throw ContractError(std::string(op) + ": cannot broadcast " +
                          ShapeString(a) + " with " + ShapeString(b));
    }
    out.shape = (a.size() == 2 || b.size() == 2) ? Shape{r, c} : Shape{c};
  } else {
    throw ContractError(std::string(op) + ": cannot broadcast " +
                        ShapeString(a) + " with " + ShapeString(b));
  }
  const bool rank2 = out.shape.size() == 2;
  out.cols = out.shape.back();
  out.rows = NumElements(out.shape) / out.cols;
  if (out.shape.size() > 2) {
    // Higher-rank tensors only combine with equal shapes or scalars.
    out.a = NumElements(a) == 1 ? Strides{0, 0} : Strides{out.cols, 1};
    out.b = NumElements(b) == 1 ? Strides{0, 0} : Strides{out.cols, 1};
    return out;
  }
  out.a = StridesFor(a, out.rows, out.cols, rank2);
  out.b = StridesFor(b, out.rows, out.cols, rank2);
  if (out.a.row_stride == SIZE_MAX || out.b.row_stride == SIZE_MAX) {
    throw ContractError(std::string(op) + ": cannot broadcast " +
                        ShapeString(a) + " with " + ShapeString(b));
  }
  return out;
}

template <typename F>
Tensor ElementwiseBinary(const Tensor& a, const Tensor& b, const Broadcast& bc,
                         F f) {
  Tensor out(bc.shape);
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      out[r * bc.cols + c] =
          f(a[r * bc.a.row_stride + c * bc.a.col_stride],
            b[r * bc.b.row_stride + c * bc.b.col_stride]);
    }
  }
  return out;
}

template <typename F>
Tensor ElementwiseUnary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

double SoftplusValue(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double SigmoidValue(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct MatDims {
  std::size_t m, k, n;
  Shape out;
};

MatDims MatMulDims(const Shape& a, const Shape& b) {
  if (a.empty() || b.empty() || a.size() > 2 || b.size() > 2) {
    throw ContractError("matmul expects rank-1 or rank-2 operands");
  }
  MatDims d;
  d.m = a.size() == 2 ? a[0] : 1;
  d.k = a.back();
  const std::size_t bk = b[0];
  d.n = b.size() == 2 ? b[1] : 1;
  if (d.k != bk) {
    throw ContractError("matmul: inner dimensions differ " + ShapeString(a) +
                        " x " + ShapeString(b));
  }
  if (a.size() == 2 && b.size() == 2) {
    d.out = {d.m, d.n};
  } else if (a.size() == 2) {
    d.out = {d.m};
  } else if (b.size() == 2) {
    d.out = {d.n};
  } else {
    d.out = {1};
  }
  return d;
}

// C[m,n] += A[m,k] * B[k,n], optionally with either operand transposed in
// storage.
void Gemm(std::size_t m, std::size_t k, std::size_t n, const double* a,
          bool a_trans, const double* b, bool b_trans, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_trans ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      if (b_trans) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      } else {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

Shape WithoutLastAxis(const Shape& s) {
  if (s.size() <= 1) return {1};
  return Shape(s.begin(), s.end() - 1);
}

}  // namespace

const Tensor& Var::value() const {
  if (graph == nullptr) throw ContractError("Var is not bound to a graph");
  return graph->value(id);
}

Var Graph::Push(OpKind op, std::vector<std::size_t> inputs, Tensor value,
                double attr, double attr2, std::vector<std::size_t> index) {
  if (!value.AllFinite()) {
    throw NumericalError(std::string("non-finite value produced by ") +
                         OpName(op));
  }
  Node node;
  node.op = op;
  node.attr = attr;
  node.attr2 = attr2;
  node.index = std::move(index);
  node.value = std::move(value);
  for (std::size_t in : inputs) {
    if (nodes_[in].requires_grad) node.requires_grad = true;
  }
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::Constant(Tensor value) {
  return Push(OpKind::kLeaf, {}, std::move(value));
}

Var Graph::Parameter(Tensor value, std::string name) {
  Var v = Push(OpKind::kLeaf, {}, std::move(value));
  nodes_[v.id].parameter = true;
  nodes_[v.id].requires_grad = true;
  nodes_[v.id].name = std::move(name);
  return v;
}

std::vector<Var> Graph::parameters() {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].parameter) out.push_back(Var{this, i});
  }
  return out;
}

// Builds nodes; the only class allowed to call Graph::Push.
class GraphOps {
 public:
  static Graph& Same(const Var& a, const Var& b) {
    if (a.graph == nullptr || a.graph != b.graph) {
      throw ContractError("operands belong to different graphs");
    }
    return *a.graph;
  }

  static Var Binary(OpKind op, const Var& a, const Var& b) {
    Graph& g = Same(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast bc = BroadcastShapes(av.shape(), bv.shape(), OpName(op));
    Tensor out;
    switch (op) {
      case OpKind::kAdd:
        out = ElementwiseBinary(av, bv, bc,
                                [](double x, double y) { return x + y; });
        break;
      case OpKind::kSub:
        out = ElementwiseBinary(av, bv, bc,
                                [](double x, double y) { return x - y; });
        break;
      case OpKind::kMul:
        out = ElementwiseBinary(av, bv, bc,
                                [](double x, double y) { return x * y; });
        break;
      case OpKind::kDiv:
        out = ElementwiseBinary(av, bv, bc,
                                [](double x, double y) { return x / y; });
        break;
      default:
        throw ContractError("not a binary op");
    }
    return g.Push(op, {a.id, b.id}, std::move(out));
  }

  static Var Unary(OpKind op, const Var& a, Tensor out, double attr = 0.0,
                   double attr2 = 0.0, std::vector<std::size_t> index = {}) {
    if (a.graph == nullptr) throw ContractError("Var is not bound to a graph");
    return a.graph->Push(op, {a.id}, std::move(out), attr, attr2,
                         std::move(index));
  }

  static Var Many(OpKind op, const std::vector<Var>& parts, Tensor out) {
    if (parts.empty()) throw ContractError("no operands");
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
      if (p.graph != parts[0].graph) {
        throw ContractError("operands belong to different graphs");
      }
      ids.push_back(p.id);
    }
    return parts[0].graph->Push(op, std::move(ids), std::move(out));
  }

  static Gradients Backward(const Var& output);
};

Var operator+(const Var& a, const Var& b) {
  return GraphOps::Binary(OpKind::kAdd, a, b);
}
Var operator-(const Var& a, const Var& b) {
  return GraphOps::Binary(OpKind::kSub, a, b);
}
Var operator*(const Var& a, const Var& b) {
  return GraphOps::Binary(OpKind::kMul, a, b);
}
Var operator/(const Var& a, const Var& b) {
  return GraphOps::Binary(OpKind::kDiv, a, b);
}

Var operator-(const Var& a) {
  return GraphOps::Unary(OpKind::kNeg, a,
                         ElementwiseUnary(a.value(), [](double x) { return -x; }));
}

Var operator*(const Var& a, double c) {
  return GraphOps::Unary(
      OpKind::kScale, a,
      ElementwiseUnary(a.value(), [c](double x) { return c * x; }), c);
}
Var operator*(double c, const Var& a) { return a * c; }

Var operator+(const Var& a, double c) {
  return GraphOps::Unary(
      OpKind::kAddScalar, a,
      ElementwiseUnary(a.value(), [c](double x) { return x + c; }), c);
}
Var operator+(double c, const Var& a) { return a + c; }
Var operator-(const Var& a, double c) { return a + (-c); }
Var operator-(double c, const Var& a) { return (-a) + c; }

Var MatMul(const Var& a, const Var& b) {
  GraphOps::Same(a, b);
  const MatDims d = MatMulDims(a.shape(), b.shape());
  Tensor out(d.out);
  Gemm(d.m, d.k, d.n, a.value().values().data(), false,
       b.value().values().data(), false, out.values().data());
  return GraphOps::Many(OpKind::kMatMul, {a, b}, std::move(out));
}

Var Transpose(const Var& a) {
  const Tensor& v = a.value();
  if (v.rank() != 2) throw ContractError("transpose expects rank 2");
  const std::size_t r = v.extent(0);
  const std::size_t c = v.extent(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  }
  return GraphOps::Unary(OpKind::kTranspose, a, std::move(out));
}

Var Exp(const Var& a) {
  return GraphOps::Unary(
      OpKind::kExp, a,
      ElementwiseUnary(a.value(), [](double x) { return std::exp(x); }));
}

Var Log(const Var& a) {
  for (double x : a.value().values()) {
    if (!(x > 0.0)) throw DomainError("log of non-positive value");
  }
  return GraphOps::Unary(
      OpKind::kLog, a,
      ElementwiseUnary(a.value(), [](double x) { return std::log(x); }));
}

Var Pow(const Var& a, double exponent) {
  return GraphOps::Unary(OpKind::kPow, a,
                         ElementwiseUnary(a.value(),
                                          [exponent](double x) {
                                            return std::pow(x, exponent);
                                          }),
                         exponent);
}

Var Sqrt(const Var& a) { return Pow(a, 0.5); }

Var Relu(const Var& a) {
  return GraphOps::Unary(
      OpKind::kRelu, a,
      ElementwiseUnary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }));
}

Var Softplus(const Var& a) {
  return GraphOps::Unary(OpKind::kSoftplus, a,
                         ElementwiseUnary(a.value(), SoftplusValue));
}

Var Sigmoid(const Var& a) { return Exp(-Softplus(-a)); }

Var L2Normalize(const Var& a) {
  const Tensor& v = a.value();
  Tensor out(v.shape());
  const std::size_t rows = v.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    const double n = Norm(v.row(r));
    if (!(n > 0.0)) throw DegenerateInputError("l2_normalize of zero vector");
    auto dst = out.row(r);
    auto src = v.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = src[c] / n;
  }
  return GraphOps::Unary(OpKind::kL2Normalize, a, std::move(out));
}

Var L2Norm(const Var& a) {
  const Tensor& v = a.value();
  Tensor out(WithoutLastAxis(v.shape()));
  for (std::size_t r = 0; r < v.rows(); ++r) out[r] = Norm(v.row(r));
  return GraphOps::Unary(OpKind::kL2Norm, a, std::move(out));
}

Var Concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat of nothing");
  Shape shape = parts[0].shape();
  std::size_t first = 0;
  std::vector<double> values;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ContractError("concat: trailing extents differ");
    }
    first += s[0];
    values.insert(values.end(), p.value().values().begin(),
                  p.value().values().end());
  }
  shape[0] = first;
  return GraphOps::Many(OpKind::kConcat, parts,
                        Tensor(std::move(shape), std::move(values)));
}

Var Slice(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (begin >= end || end > v.extent(0)) {
    throw ContractError("slice range out of bounds");
  }
  const std::size_t stride = v.size() / v.extent(0);
  Shape shape = v.shape();
  shape[0] = end - begin;
  std::vector<double> values(v.values().begin() + begin * stride,
                             v.values().begin() + end * stride);
  return GraphOps::Unary(OpKind::kSlice, a,
                         Tensor(std::move(shape), std::move(values)),
                         static_cast<double>(begin), static_cast<double>(end));
}

Var GatherRows(const Var& a, std::vector<std::size_t> rows) {
  const Tensor& v = a.value();
  if (rows.empty()) throw ContractError("gather of no rows");
  const std::size_t stride = v.size() / v.extent(0);
  Shape shape = v.shape();
  shape[0] = rows.size();
  std::vector<double> values;
  values.reserve(rows.size() * stride);
  for (std::size_t r : rows) {
    if (r >= v.extent(0)) throw ContractError("gather row out of range");
    values.insert(values.end(), v.values().begin() + r * stride,
                  v.values().begin() + (r + 1) * stride);
  }
  return GraphOps::Unary(OpKind::kGatherRows, a,
                         Tensor(std::move(shape), std::move(values)), 0.0,
                         0.0, std::move(rows));
}

Var Reshape(const Var& a, Shape shape) {
  return GraphOps::Unary(OpKind::kReshape, a,
                         a.value().Reshaped(std::move(shape)));
}

Var Sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return GraphOps::Unary(OpKind::kSum, a, Tensor::Scalar(s));
}

Var Mean(const Var& a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return GraphOps::Unary(OpKind::kMean, a,
                         Tensor::Scalar(s / static_cast<double>(a.value().size())));
}

Var SumLast(const Var& a) {
  const Tensor& v = a.value();
  Tensor out(WithoutLastAxis(v.shape()));
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (double x : v.row(r)) s += x;
    out[r] = s;
  }
  return GraphOps::Unary(OpKind::kSumLast, a, std::move(out));
}

Var LogSumExpLast(const Var& a) {
  const Tensor& v = a.value();
  Tensor out(WithoutLastAxis(v.shape()));
  for (std::size_t r = 0; r < v.rows(); ++r) out[r] = LogSumExp(v.row(r));
  return GraphOps::Unary(OpKind::kLogSumExpLast, a, std::move(out));
}

Var LogBesselI(double order, const Var& x) {
  return GraphOps::Unary(
      OpKind::kLogBesselI, x,
      ElementwiseUnary(x.value(),
                       [order](double v) { return LogBesselI(order, v); }),
      order);
}

Var Clamp(const Var& a, double lo, double hi) {
  return GraphOps::Unary(OpKind::kClamp, a,
                         ElementwiseUnary(a.value(),
                                          [lo, hi](double x) {
                                            return std::clamp(x, lo, hi);
                                          }),
                         lo, hi);
}

Var ArcMargin(const Var& a, double margin) {
  return GraphOps::Unary(
      OpKind::kArcMargin, a,
      ElementwiseUnary(a.value(),
                       [margin](double x) {
                         return std::cos(std::acos(std::clamp(x, -1.0, 1.0)) +
                                         margin);
                       }),
      margin);
}

const Tensor& Gradients::at(const Var& parameter) const {
  auto it = by_id_.find(parameter.id);
  if (it == by_id_.end()) throw ContractError("not a parameter of this graph");
  return it->second;
}

const Tensor& Gradients::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ContractError("no parameter named '" + name + "'");
  }
  return by_id_.at(it->second);
}

Gradients Gradient(const Var& output) { return GraphOps::Backward(output); }

Gradients GraphOps::Backward(const Var& output) {
  if (output.graph == nullptr) throw ContractError("unbound output");
  Graph& g = *output.graph;
  if (output.value().size() != 1) {
    throw ContractError("gradient requires a scalar output, got shape " +
                        ShapeString(output.shape()));
  }
  auto& nodes = g.nodes_;
  std::vector<Tensor> grads(output.id + 1);
  std::vector<bool> has(output.id + 1, false);
  auto acc = [&](std::size_t id) -> Tensor& {
    if (!has[id]) {
      grads[id] = Tensor(nodes[id].value.shape());
      has[id] = true;
    }
    return grads[id];
  };
  grads[output.id] = Tensor(nodes[output.id].value.shape(), 1.0);
  has[output.id] = true;

  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (!has[id]) continue;
    const auto& node = nodes[id];
    if (!node.requires_grad || node.op == OpKind::kLeaf) continue;
    const Tensor& gy = grads[id];
    const Tensor& y = node.value;
    auto in = [&](std::size_t k) -> const Tensor& {
      return nodes[node.inputs[k]].value;
    };
    auto wants = [&](std::size_t k) {
      return nodes[node.inputs[k]].requires_grad;
    };

    switch (node.op) {
      case OpKind::kAdd:
      case OpKind::kSub:
      case OpKind::kMul:
      case OpKind::kDiv: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        const Broadcast bc =
            BroadcastShapes(a.shape(), b.shape(), OpName(node.op));
        Tensor* ga = wants(0) ? &acc(node.inputs[0]) : nullptr;
        Tensor* gb = wants(1) ? &acc(node.inputs[1]) : nullptr;
        for (std::size_t r = 0; r < bc.rows; ++r) {
          for (std::size_t c = 0; c < bc.cols; ++c) {
            const double gv = gy[r * bc.cols + c];
            const std::size_t ia = r * bc.a.row_stride + c * bc.a.col_stride;
            const std::size_t ib = r * bc.b.row_stride + c * bc.b.col_stride;
            switch (node.op) {
              case OpKind::kAdd:
                if (ga) (*ga)[ia] += gv;
                if (gb) (*gb)[ib] += gv;
                break;
              case OpKind::kSub:
                if (ga) (*ga)[ia] += gv;
                if (gb) (*gb)[ib] -= gv;
                break;
              case OpKind::kMul:
                if (ga) (*ga)[ia] += gv * b[ib];
                if (gb) (*gb)[ib] += gv * a[ia];
                break;
              default:
                if (ga) (*ga)[ia] += gv / b[ib];
                if (gb) (*gb)[ib] -= gv * a[ia] / (b[ib] * b[ib]);
                break;
            }
          }
        }
        break;
      }
      case OpKind::kNeg: {
        Tensor& ga = acc(node.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] -= gy[i];
        break;
      }
      case OpKind::kScale: {
        Tensor& ga = acc(node.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += node.attr * gy[i];
        break;
      }
      case OpKind::kAddScalar:
      case OpKind::kReshape: {
        Tensor& ga = acc(node.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        break;
      }
      case OpKind::kMatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        const MatDims d = MatMulDims(a.shape(), b.shape());
        // gA[m,k] += G[m,n] B^T ; gB[k,n] += A^T G.
        if (wants(0)) {
          Gemm(d.m, d.n, d.k, gy.values().data(), false, b.values().data(),
               true, acc(node.inputs[0]).values().data());
        }
        if (wants(1)) {
          Gemm(d.k, d.m, d.n, a.values().data(), true, gy.values().data(),
               false, acc(node.inputs[1]).values().data());
        }
        break;
      }
      case OpKind::kTranspose: {
        Tensor& ga = acc(node.inputs[0]);
        const std::size_t r = in(0).extent(0);
        const std::size_t c = in(0).extent(1);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[j * r + i];
        }
        break;
      }
      case OpKind::kExp: {
        Tensor& ga = acc(node.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i];
        break;
      }
      case OpKind::kLog: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / x[i];
        break;
      }
      case OpKind::kPow: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        const double p = node.attr;
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] * p * std::pow(x[i], p - 1.0);
        }
        break;
      }
      case OpKind::kRelu: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          if (x[i] > 0.0) ga[i] += gy[i];
        }
        break;
      }
      case OpKind::kSoftplus: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] * SigmoidValue(x[i]);
        }
        break;
      }
      case OpKind::kL2Normalize: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const double n = Norm(x.row(r));
          auto yr = y.row(r);
          auto gr = gy.row(r);
          const double proj = Dot(yr, gr);
          auto dst = ga.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) {
            dst[c] += (gr[c] - yr[c] * proj) / n;
          }
        }
        break;
      }
      case OpKind::kL2Norm: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const double n = y[r];
          if (n == 0.0) continue;
          auto xr = x.row(r);
          auto dst = ga.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) {
            dst[c] += gy[r] * xr[c] / n;
          }
        }
        break;
      }
      case OpKind::kConcat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const std::size_t n = in(k).size();
          if (wants(k)) {
            Tensor& ga = acc(node.inputs[k]);
            for (std::size_t i = 0; i < n; ++i) ga[i] += gy[offset + i];
          }
          offset += n;
        }
        break;
      }
      case OpKind::kSlice: {
        Tensor& ga = acc(node.inputs[0]);
        const std::size_t stride = in(0).size() / in(0).extent(0);
        const std::size_t begin = static_cast<std::size_t>(node.attr);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[begin * stride + i] += gy[i];
        }
        break;
      }
      case OpKind::kGatherRows: {
        Tensor& ga = acc(node.inputs[0]);
        const std::size_t stride = in(0).size() / in(0).extent(0);
        for (std::size_t k = 0; k < node.index.size(); ++k) {
          const std::size_t src = node.index[k] * stride;
          for (std::size_t c = 0; c < stride; ++c) {
            ga[src + c] += gy[k * stride + c];
          }
        }
        break;
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        Tensor& ga = acc(node.inputs[0]);
        const double scale =
            node.op == OpKind::kSum ? 1.0 : 1.0 / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[0] * scale;
        break;
      }
      case OpKind::kSumLast: {
        Tensor& ga = acc(node.inputs[0]);
        for (std::size_t r = 0; r < ga.rows(); ++r) {
          for (double& v : ga.row(r)) v += gy[r];
        }
        break;
      }
      case OpKind::kLogSumExpLast: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          auto dst = ga.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) {
            dst[c] += gy[r] * std::exp(xr[c] - y[r]);
          }
        }
        break;
      }
      case OpKind::kLogBesselI: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] * LogBesselIDerivative(node.attr, x[i]);
        }
        break;
      }
      case OpKind::kClamp: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          if (x[i] >= node.attr && x[i] <= node.attr2) ga[i] += gy[i];
        }
        break;
      }
      case OpKind::kArcMargin: {
        Tensor& ga = acc(node.inputs[0]);
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          if (x[i] < -1.0 || x[i] > 1.0) continue;
          const double theta = std::acos(x[i]);
          const double s = std::max(std::sqrt(1.0 - x[i] * x[i]), 1e-12);
          ga[i] += gy[i] * std::sin(theta + node.attr) / s;
        }
        break;
      }
      case OpKind::kLeaf:
        break;
    }
  }

  Gradients result;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    if (!nodes[id].parameter) continue;
    Tensor grad = (id <= output.id && has[id]) ? std::move(grads[id])
                                               : Tensor(nodes[id].value.shape());
    grad.CheckFinite("gradient of parameter '" + nodes[id].name + "'");
    result.by_id_.emplace(id, std::move(grad));
    if (!nodes[id].name.empty()) result.by_name_[nodes[id].name] = id;
  }
  return result;
}

}  // namespace pemb
