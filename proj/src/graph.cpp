// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ropo {

namespace {

// Limited elementwise broadcast: equal shapes, or a rank-2 matrix against a
// 1xC row vector or Rx1 column vector (either side).
enum class Bcast { kSame, kBRow, kBCol, kARow, kACol };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Bcast::kSame;
  if (a.rank() == 2 && b.rank() == 2) {
    if (b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1) return Bcast::kBRow;
    if (b.cols() == 1 && b.rows() == a.rows() && a.cols() != 1) return Bcast::kBCol;
    if (a.rows() == 1 && a.cols() == b.cols() && b.rows() != 1) return Bcast::kARow;
    if (a.cols() == 1 && a.rows() == b.rows() && b.cols() != 1) return Bcast::kACol;
  }
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() +
                              " vs " + b.shape_string());
}

void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const int r = a.rows(), k = a.cols(), c = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < r; ++i) {
    const double* arow = pa + static_cast<size_t>(i) * k;
    double* orow = po + static_cast<size_t>(i) * c;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<size_t>(kk) * c;
      for (int j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

// out (r x k) += a (r x c) * b^T, b is (k x c)
void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const int r = a.rows(), c = a.cols(), k = b.rows();
  for (int i = 0; i < r; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * c;
    double* orow = out.data() + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double* brow = b.data() + static_cast<size_t>(kk) * c;
      double acc = 0.0;
      for (int j = 0; j < c; ++j) acc += arow[j] * brow[j];
      orow[kk] += acc;
    }
  }
}

// out (k x c) += a^T * b, a is (r x k), b is (r x c)
void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const int r = a.rows(), k = a.cols(), c = b.cols();
  for (int i = 0; i < r; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * k;
    const double* brow = b.data() + static_cast<size_t>(i) * c;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* orow = out.data() + static_cast<size_t>(kk) * c;
      for (int j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
const Graph::Node& Graph::node(Var v) const { return nodes_[static_cast<size_t>(v.id)]; }

void Graph::check_var(Var v, const char* op) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(op) + ": variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::param(Tensor value) {
  Node n;
  n.op = Op::kParam;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  check_var(a, "matmul");
  check_var(b, "matmul");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " + ta.shape_string() + " * " +
                                tb.shape_string());
  }
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a.id, b.id};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = Tensor({ta.rows(), tb.cols()});
  mm_nn_acc(ta, tb, n.value);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  check_var(a, "add");
  check_var(b, "add");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const Bcast k = broadcast_kind(ta, tb, "add");
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  const Tensor& big = (k == Bcast::kARow || k == Bcast::kACol) ? tb : ta;
  Tensor out(big.shape());
  if (k == Bcast::kSame) {
    for (int i = 0; i < big.size(); ++i) out[i] = ta[i] + tb[i];
  } else {
    const Tensor& vec = (k == Bcast::kARow || k == Bcast::kACol) ? ta : tb;
    const bool row = (k == Bcast::kARow || k == Bcast::kBRow);
    for (int i = 0; i < big.rows(); ++i)
      for (int j = 0; j < big.cols(); ++j) out.at(i, j) = big.at(i, j) + (row ? vec[j] : vec[i]);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  check_var(a, "mul");
  check_var(b, "mul");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const Bcast k = broadcast_kind(ta, tb, "mul");
  Node n;
  n.op = Op::kMul;
  n.inputs = {a.id, b.id};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  const Tensor& big = (k == Bcast::kARow || k == Bcast::kACol) ? tb : ta;
  Tensor out(big.shape());
  if (k == Bcast::kSame) {
    for (int i = 0; i < big.size(); ++i) out[i] = ta[i] * tb[i];
  } else {
    const Tensor& vec = (k == Bcast::kARow || k == Bcast::kACol) ? ta : tb;
    const bool row = (k == Bcast::kARow || k == Bcast::kBRow);
    for (int i = 0; i < big.rows(); ++i)
      for (int j = 0; j < big.cols(); ++j) out.at(i, j) = big.at(i, j) * (row ? vec[j] : vec[i]);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Graph::neg(Var a) {
  check_var(a, "neg");
  Node n;
  n.op = Op::kNeg;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (int i = 0; i < n.value.size(); ++i) n.value[i] = -n.value[i];
  return push(std::move(n));
}

Var Graph::scale(Var a, double factor) {
  check_var(a, "scale");
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.factor = factor;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (int i = 0; i < n.value.size(); ++i) n.value[i] *= factor;
  return push(std::move(n));
}

Var Graph::exp(Var a) {
  check_var(a, "exp");
  Node n;
  n.op = Op::kExp;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (int i = 0; i < n.value.size(); ++i) n.value[i] = std::exp(n.value[i]);
  return push(std::move(n));
}

Var Graph::log(Var a) {
  check_var(a, "log");
  const Tensor& ta = node(a).value;
  require_finite(ta, "log");
  for (int i = 0; i < ta.size(); ++i) {
    if (ta[i] <= 0.0) throw std::domain_error("log: nonpositive input");
  }
  Node n;
  n.op = Op::kLog;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = ta;
  for (int i = 0; i < n.value.size(); ++i) n.value[i] = std::log(n.value[i]);
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  check_var(a, "sigmoid");
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (int i = 0; i < n.value.size(); ++i) n.value[i] = stable_sigmoid(n.value[i]);
  return push(std::move(n));
}

Var Graph::softmax(Var a) {
  check_var(a, "softmax");
  const Tensor& ta = node(a).value;
  if (ta.rank() > 2) throw std::invalid_argument("softmax: rank-1 or rank-2 input required");
  require_finite(ta, "softmax");
  const int rows = ta.rank() == 2 ? ta.rows() : 1;
  const int cols = ta.rank() == 2 ? ta.cols() : ta.size();
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = ta;
  for (int i = 0; i < rows; ++i) {
    double* row = n.value.data() + static_cast<size_t>(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (int j = 0; j < cols; ++j) row[j] /= denom;
  }
  return push(std::move(n));
}

Var Graph::log_softmax(Var a) {
  check_var(a, "log_softmax");
  const Tensor& ta = node(a).value;
  if (ta.rank() > 2) throw std::invalid_argument("log_softmax: rank-1 or rank-2 input required");
  require_finite(ta, "log_softmax");
  const int rows = ta.rank() == 2 ? ta.rows() : 1;
  const int cols = ta.rank() == 2 ? ta.cols() : ta.size();
  Node n;
  n.op = Op::kLogSoftmax;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = ta;
  for (int i = 0; i < rows; ++i) {
    double* row = n.value.data() + static_cast<size_t>(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < cols; ++j) row[j] -= lse;
  }
  return push(std::move(n));
}

Var Graph::gather_rows(Var a, std::vector<int> indices) {
  check_var(a, "gather_rows");
  const Tensor& ta = node(a).value;
  if (ta.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 input required");
  for (int idx : indices) {
    if (idx < 0 || idx >= ta.rows()) throw std::invalid_argument("gather_rows: index out of range");
  }
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = Tensor({static_cast<int>(indices.size()), ta.cols()});
  for (size_t r = 0; r < indices.size(); ++r)
    for (int j = 0; j < ta.cols(); ++j) n.value.at(static_cast<int>(r), j) = ta.at(indices[r], j);
  n.indices = std::move(indices);
  return push(std::move(n));
}

Var Graph::gather_cols(Var a, std::vector<int> indices) {
  check_var(a, "gather_cols");
  const Tensor& ta = node(a).value;
  if (ta.rank() != 2) throw std::invalid_argument("gather_cols: rank-2 input required");
  for (int idx : indices) {
    if (idx < 0 || idx >= ta.cols()) throw std::invalid_argument("gather_cols: index out of range");
  }
  Node n;
  n.op = Op::kGatherCols;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = Tensor({ta.rows(), static_cast<int>(indices.size())});
  for (int i = 0; i < ta.rows(); ++i)
    for (size_t c = 0; c < indices.size(); ++c)
      n.value.at(i, static_cast<int>(c)) = ta.at(i, indices[c]);
  n.indices = std::move(indices);
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  check_var(a, "sum");
  Node n;
  n.op = Op::kSum;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  double acc = 0.0;
  for (int i = 0; i < node(a).value.size(); ++i) acc += node(a).value[i];
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  check_var(a, "mean");
  Node n;
  n.op = Op::kMean;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  double acc = 0.0;
  for (int i = 0; i < node(a).value.size(); ++i) acc += node(a).value[i];
  n.value = Tensor::scalar(acc / node(a).value.size());
  return push(std::move(n));
}

Var Graph::sum_axis(Var a, int axis) {
  check_var(a, "sum_axis");
  const Tensor& ta = node(a).value;
  if (ta.rank() != 2 || (axis != 0 && axis != 1)) {
    throw std::invalid_argument("sum_axis: rank-2 input and axis 0 or 1 required");
  }
  Node n;
  n.op = Op::kSumAxis;
  n.inputs = {a.id};
  n.axis = axis;
  n.requires_grad = node(a).requires_grad;
  n.value = axis == 0 ? Tensor({1, ta.cols()}) : Tensor({ta.rows(), 1});
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) n.value[axis == 0 ? j : i] += ta.at(i, j);
  return push(std::move(n));
}

Var Graph::mean_axis(Var a, int axis) {
  Var s = sum_axis(a, axis);
  const Tensor& ta = node(a).value;
  return scale(s, 1.0 / (axis == 0 ? ta.rows() : ta.cols()));
}

Var Graph::concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  for (Var p : parts) check_var(p, "concat");
  const Tensor& first = node(parts[0]).value;
  Node n;
  n.op = Op::kConcat;
  n.axis = axis;
  if (first.rank() == 1) {
    if (axis != 0) throw std::invalid_argument("concat: rank-1 inputs use axis 0");
    int total = 0;
    for (Var p : parts) {
      if (node(p).value.rank() != 1) throw std::invalid_argument("concat: mixed ranks");
      total += node(p).value.size();
    }
    n.value = Tensor({total});
    int off = 0;
    for (Var p : parts) {
      const Tensor& t = node(p).value;
      std::copy(t.data(), t.data() + t.size(), n.value.data() + off);
      off += t.size();
      n.inputs.push_back(p.id);
      n.requires_grad = n.requires_grad || node(p).requires_grad;
    }
    return push(std::move(n));
  }
  if (first.rank() != 2 || (axis != 0 && axis != 1)) {
    throw std::invalid_argument("concat: rank-2 inputs use axis 0 or 1");
  }
  int rows = axis == 0 ? 0 : first.rows();
  int cols = axis == 1 ? 0 : first.cols();
  for (Var p : parts) {
    const Tensor& t = node(p).value;
    if (t.rank() != 2 || (axis == 0 && t.cols() != cols) || (axis == 1 && t.rows() != rows)) {
      throw std::invalid_argument("concat: incompatible part shapes");
    }
    if (axis == 0) rows += t.rows();
    if (axis == 1) cols += t.cols();
  }
  n.value = Tensor({rows, cols});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = node(p).value;
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < t.cols(); ++j) {
        if (axis == 0) {
          n.value.at(off + i, j) = t.at(i, j);
        } else {
          n.value.at(i, off + j) = t.at(i, j);
        }
      }
    off += axis == 0 ? t.rows() : t.cols();
    n.inputs.push_back(p.id);
    n.requires_grad = n.requires_grad || node(p).requires_grad;
  }
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  check_var(a, "transpose");
  const Tensor& ta = node(a).value;
  if (ta.rank() != 2) throw std::invalid_argument("transpose: rank-2 input required");
  Node n;
  n.op = Op::kTranspose;
  n.inputs = {a.id};
  n.requires_grad = node(a).requires_grad;
  n.value = transposed(ta);
  return push(std::move(n));
}

Var Graph::custom(std::shared_ptr<const CustomOp> op, std::vector<Var> inputs) {
  if (!op) throw std::invalid_argument("custom: null op");
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  Node n;
  n.op = Op::kCustom;
  for (Var v : inputs) {
    check_var(v, op->name());
    in.push_back(&node(v).value);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || node(v).requires_grad;
  }
  n.value = op->forward(in);
  n.custom = std::move(op);
  return push(std::move(n));
}

const Tensor& Graph::value(Var v) const {
  check_var(v, "value");
  return node(v).value;
}

bool Graph::requires_grad(Var v) const {
  check_var(v, "requires_grad");
  return node(v).requires_grad;
}

const Tensor& Graph::grad(Var v) const {
  check_var(v, "grad");
  const Node& n = node(v);
  if (n.grad.empty()) {
    throw std::logic_error("grad: no gradient recorded for this variable; run backward first");
  }
  return n.grad;
}

void Graph::backward(Var output) {
  check_var(output, "backward");
  backward(output, Tensor::ones(node(output).value.shape()));
}

void Graph::backward(Var output, const Tensor& seed) {
  check_var(output, "backward");
  if (!seed.same_shape(node(output).value)) {
    throw std::invalid_argument("backward: seed shape " + seed.shape_string() +
                                " does not match output " + node(output).value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  node(output).grad = seed;
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() || n.inputs.empty() || !n.requires_grad) continue;
    backprop_node(id);
  }
  // Parameters the output never touched still report a well-defined zero.
  for (Node& n : nodes_) {
    if (n.op == Op::kParam && n.grad.empty()) n.grad = Tensor(n.value.shape());
  }
}

void Graph::backprop_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = n.grad;
  auto buf = [&](int input) -> Tensor* {
    Node& in = nodes_[static_cast<size_t>(input)];
    if (!in.requires_grad) return nullptr;
    if (in.grad.empty()) in.grad = Tensor(in.value.shape());
    return &in.grad;
  };
  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      break;
    case Op::kMatMul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
      const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].value;
      if (Tensor* da = buf(n.inputs[0])) mm_nt_acc(g, b, *da);
      if (Tensor* db = buf(n.inputs[1])) mm_tn_acc(a, g, *db);
      break;
    }
    case Op::kAdd:
    case Op::kMul: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
      const Tensor& b = nodes_[static_cast<size_t>(n.inputs[1])].value;
      const bool is_mul = n.op == Op::kMul;
      auto accumulate = [&](int which) {
        Tensor* dst = buf(n.inputs[which]);
        if (!dst) return;
        const Tensor& self = which == 0 ? a : b;
        const Tensor& other = which == 0 ? b : a;
        if (self.same_shape(n.value)) {
          // Full-shape operand: pair gradient with (possibly broadcast) other.
          const bool other_vec = !other.same_shape(n.value);
          const bool other_row = other_vec && other.rows() == 1;
          for (int i = 0; i < n.value.size(); ++i) {
            double o = 1.0;
            if (is_mul) {
              if (!other_vec) {
                o = other[i];
              } else {
                const int r = i / n.value.cols(), c = i % n.value.cols();
                o = other_row ? other[c] : other[r];
              }
            }
            (*dst)[i] += is_mul ? g[i] * o : g[i];
          }
        } else {
          // Vector operand: reduce over the broadcast axis.
          const bool row = self.rows() == 1;
          for (int i = 0; i < n.value.rows(); ++i)
            for (int j = 0; j < n.value.cols(); ++j) {
              const double o = is_mul ? other.at(i, j) : 1.0;
              (*dst)[row ? j : i] += g.at(i, j) * o;
            }
        }
      };
      accumulate(0);
      accumulate(1);
      break;
    }
    case Op::kNeg: {
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < g.size(); ++i) (*da)[i] -= g[i];
      }
      break;
    }
    case Op::kScale: {
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < g.size(); ++i) (*da)[i] += n.factor * g[i];
      }
      break;
    }
    case Op::kExp: {
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.value[i];
      }
      break;
    }
    case Op::kLog: {
      const Tensor& a = nodes_[static_cast<size_t>(n.inputs[0])].value;
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < g.size(); ++i) (*da)[i] += g[i] / a[i];
      }
      break;
    }
    case Op::kSigmoid: {
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      }
      break;
    }
    case Op::kSoftmax: {
      Tensor* da = buf(n.inputs[0]);
      if (!da) break;
      const int rows = n.value.rank() == 2 ? n.value.rows() : 1;
      const int cols = n.value.rank() == 2 ? n.value.cols() : n.value.size();
      for (int i = 0; i < rows; ++i) {
        const double* p = n.value.data() + static_cast<size_t>(i) * cols;
        const double* gp = g.data() + static_cast<size_t>(i) * cols;
        double inner = 0.0;
        for (int j = 0; j < cols; ++j) inner += gp[j] * p[j];
        double* d = da->data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) d[j] += p[j] * (gp[j] - inner);
      }
      break;
    }
    case Op::kLogSoftmax: {
      Tensor* da = buf(n.inputs[0]);
      if (!da) break;
      const int rows = n.value.rank() == 2 ? n.value.rows() : 1;
      const int cols = n.value.rank() == 2 ? n.value.cols() : n.value.size();
      for (int i = 0; i < rows; ++i) {
        const double* lp = n.value.data() + static_cast<size_t>(i) * cols;
        const double* gp = g.data() + static_cast<size_t>(i) * cols;
        double gsum = 0.0;
        for (int j = 0; j < cols; ++j) gsum += gp[j];
        double* d = da->data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) d[j] += gp[j] - std::exp(lp[j]) * gsum;
      }
      break;
    }
    case Op::kGatherRows: {
      Tensor* da = buf(n.inputs[0]);
      if (!da) break;
      for (size_t r = 0; r < n.indices.size(); ++r)
        for (int j = 0; j < n.value.cols(); ++j)
          da->at(n.indices[r], j) += g.at(static_cast<int>(r), j);
      break;
    }
    case Op::kGatherCols: {
      Tensor* da = buf(n.inputs[0]);
      if (!da) break;
      for (int i = 0; i < n.value.rows(); ++i)
        for (size_t c = 0; c < n.indices.size(); ++c)
          da->at(i, n.indices[c]) += g.at(i, static_cast<int>(c));
      break;
    }
    case Op::kSum: {
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < da->size(); ++i) (*da)[i] += g[0];
      }
      break;
    }
    case Op::kMean: {
      if (Tensor* da = buf(n.inputs[0])) {
        const double s = g[0] / da->size();
        for (int i = 0; i < da->size(); ++i) (*da)[i] += s;
      }
      break;
    }
    case Op::kSumAxis: {
      Tensor* da = buf(n.inputs[0]);
      if (!da) break;
      for (int i = 0; i < da->rows(); ++i)
        for (int j = 0; j < da->cols(); ++j) da->at(i, j) += g[n.axis == 0 ? j : i];
      break;
    }
    case Op::kConcat: {
      int off = 0;
      for (int input : n.inputs) {
        const Tensor& part = nodes_[static_cast<size_t>(input)].value;
        Tensor* dp = buf(input);
        if (part.rank() == 1) {
          if (dp) {
            for (int i = 0; i < part.size(); ++i) (*dp)[i] += g[off + i];
          }
          off += part.size();
        } else {
          if (dp) {
            for (int i = 0; i < part.rows(); ++i)
              for (int j = 0; j < part.cols(); ++j)
                dp->at(i, j) += n.axis == 0 ? g.at(off + i, j) : g.at(i, off + j);
          }
          off += n.axis == 0 ? part.rows() : part.cols();
        }
      }
      break;
    }
    case Op::kTranspose: {
      if (Tensor* da = buf(n.inputs[0])) {
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) da->at(j, i) += g.at(i, j);
      }
      break;
    }
    case Op::kCustom: {
      std::vector<const Tensor*> in;
      std::vector<Tensor*> din;
      in.reserve(n.inputs.size());
      din.reserve(n.inputs.size());
      for (int input : n.inputs) {
        in.push_back(&nodes_[static_cast<size_t>(input)].value);
        din.push_back(buf(input));
      }
      n.custom->backward(g, in, n.value, din);
      break;
    }
  }
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& point, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  Tensor grad(point.shape());
  Tensor probe = point;
  for (int i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = f(probe);
    probe[i] = point[i] - step;
    const double down = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_difference_gradient: non-finite value at coordinate " +
                              std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace ropo
