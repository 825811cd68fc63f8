// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "ropo/tensor.hpp"

namespace ropo {

// Handle to a node on a Graph tape. Only meaningful with the graph that
// produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Extension point for ops with hand-written derivative rules. forward()
// produces the node value; backward() accumulates into the input gradient
// buffers (already allocated and zero- or partially-filled).
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  virtual Tensor forward(const std::vector<const Tensor*>& inputs) const = 0;
  virtual void backward(const Tensor& grad_out, const std::vector<const Tensor*>& inputs,
                        const Tensor& out, const std::vector<Tensor*>& grad_inputs) const = 0;
};

// Reverse-mode tape. Nodes are appended by the builder methods, values are
// computed eagerly, and backward() replays the tape once in reverse order.
// Elementwise add/mul accept equal shapes or a rank-2 operand against a 1xC
// row or Rx1 column vector; nothing broadcasts beyond that. backward() may be
// called repeatedly; every call starts from fresh gradient buffers.
class Graph {
 public:
  Var constant(Tensor value);
  Var param(Tensor value);  // trainable leaf

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double factor);
  Var exp(Var a);
  Var log(Var a);
  Var sigmoid(Var a);
  Var softmax(Var a);      // over the last axis, row by row
  Var log_softmax(Var a);  // stable fused form of log(softmax(a))
  Var gather_rows(Var a, std::vector<int> indices);
  Var gather_cols(Var a, std::vector<int> indices);
  Var sum(Var a);   // full reduction to a scalar
  Var mean(Var a);
  Var sum_axis(Var a, int axis);   // rank-2, keeps a size-1 axis for broadcasting
  Var mean_axis(Var a, int axis);
  Var concat(const std::vector<Var>& parts, int axis);
  Var transpose(Var a);
  Var custom(std::shared_ptr<const CustomOp> op, std::vector<Var> inputs);

  const Tensor& value(Var v) const;
  // Gradient of sum(seed .* output) w.r.t. every node; seed defaults to ones.
  void backward(Var output);
  void backward(Var output, const Tensor& seed);
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    kConstant, kParam, kMatMul, kAdd, kMul, kNeg, kScale, kExp, kLog, kSigmoid,
    kSoftmax, kLogSoftmax, kGatherRows, kGatherCols, kSum, kMean, kSumAxis,
    kConcat, kTranspose, kCustom,
  };

  struct Node {
    Op op;
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    bool requires_grad = false;
    double factor = 0.0;            // kScale
    int axis = -1;                  // reductions / concat
    std::vector<int> indices;       // gathers
    std::shared_ptr<const CustomOp> custom;
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_var(Var v, const char* op) const;
  void backprop_node(int id);

  std::deque<Node> nodes_;  // stable references across appends
};

// Central-difference gradient of a scalar function, the reference oracle for
// every tape rule. Throws if the function returns a non-finite value at any
// probe point (the message names the coordinate).
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& point, double step = 1e-5);

}  // namespace ropo
