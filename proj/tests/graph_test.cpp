// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/graph.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <stdexcept>

#include "ropo/rng.hpp"
#include "test_util.hpp"

namespace ropo {
namespace {

using testing::max_rel_err;
using testing::rel_err;

TEST(Graph, SquareValueAndGradient) {
  Graph g;
  Var x = g.param(Tensor::scalar(3.0));
  Var y = g.mul(x, x);
  EXPECT_DOUBLE_EQ(g.value(y)[0], 9.0);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 6.0);
}

TEST(Graph, MatmulIdentityPassThrough) {
  Graph g;
  Tensor a = Tensor::matrix({{1.5, -2.0}, {0.25, 7.0}});
  Var av = g.constant(a);
  Var out = g.matmul(g.constant(Tensor::identity(2)), av);
  EXPECT_EQ(max_abs_diff(g.value(out), a), 0.0);
}

TEST(Graph, SoftmaxOfZerosIsUniform) {
  Graph g;
  Var s = g.softmax(g.constant(Tensor::vector({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(g.value(s)[0], 0.5);
  EXPECT_DOUBLE_EQ(g.value(s)[1], 0.5);
}

TEST(Graph, LogSigmoidGradientAtZero) {
  Graph g;
  Var x = g.param(Tensor::scalar(0.0));
  Var y = g.log(g.sigmoid(x));
  EXPECT_NEAR(g.value(y)[0], std::log(0.5), 1e-15);
  g.backward(y);
  // d/dx log(sigmoid(x)) = 1 - sigmoid(x) = 0.5 at x = 0.
  EXPECT_NEAR(g.grad(x)[0], 0.5, 1e-15);
}

TEST(Graph, MatmulGradientMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor b = rng.uniform_tensor({3, 2}, -2.0, 2.0);
  Tensor a0 = rng.uniform_tensor({2, 3}, -2.0, 2.0);
  auto f = [&](const Tensor& a) {
    Graph g;
    return g.value(g.sum(g.matmul(g.constant(a), g.constant(b))))[0];
  };
  Graph g;
  Var a = g.param(a0);
  Var loss = g.sum(g.matmul(a, g.constant(b)));
  g.backward(loss);
  Tensor fd = finite_difference_gradient(f, a0);
  EXPECT_LT(max_rel_err(g.grad(a), fd), 1e-6);
  // d sum(A*B) / dA has rows equal to the row sums of B^T.
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = 0.0;
      for (int c = 0; c < 2; ++c) want += b.at(j, c);
      EXPECT_NEAR(g.grad(a).at(i, j), want, 1e-12);
    }
}

TEST(FiniteDifference, SquareAndConstant) {
  auto square = [](const Tensor& x) { return x[0] * x[0]; };
  Tensor fd = finite_difference_gradient(square, Tensor::scalar(3.0), 1e-5);
  EXPECT_NEAR(fd[0], 6.0, 1e-8);

  auto constant = [](const Tensor&) { return 4.25; };
  Tensor zero = finite_difference_gradient(constant, Tensor::vector({1.0, -1.0, 0.5}));
  EXPECT_EQ(max_abs(zero), 0.0);
}

TEST(FiniteDifference, RejectsNonFiniteProbes) {
  auto bad = [](const Tensor& x) { return std::log(x[0]) + std::log(x[1]); };
  EXPECT_THROW(finite_difference_gradient(bad, Tensor::vector({1.0, -2.0})), std::domain_error);
}

// Every supported op checked against the central-difference oracle on random
// inputs in [-2, 2].
class OpGradientCheck {
 public:
  using Builder = std::function<Var(Graph&, Var)>;

  static void run(const Builder& build, const Shape& shape, uint64_t seed, int trials = 5) {
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
      Tensor x0 = rng.uniform_tensor(shape, -2.0, 2.0);
      Graph g;
      Var x = g.param(x0);
      Var loss = build(g, x);
      ASSERT_EQ(g.value(loss).size(), 1);
      g.backward(loss);
      auto f = [&](const Tensor& probe) {
        Graph h;
        return h.value(build(h, h.param(probe)))[0];
      };
      Tensor fd = finite_difference_gradient(f, x0);
      EXPECT_LT(max_rel_err(g.grad(x), fd), 1e-6);
    }
  }
};

TEST(GraphGradients, AllOpsMatchFiniteDifferences) {
  Rng wrng(99);
  const Tensor w23 = wrng.uniform_tensor({2, 3}, -2.0, 2.0);
  const Tensor w32 = wrng.uniform_tensor({3, 2}, -2.0, 2.0);
  const Tensor w22 = wrng.uniform_tensor({2, 2}, -2.0, 2.0);
  const Tensor w33 = wrng.uniform_tensor({3, 3}, -2.0, 2.0);
  const Tensor w13 = wrng.uniform_tensor({1, 3}, -2.0, 2.0);
  const Tensor w21 = wrng.uniform_tensor({2, 1}, -2.0, 2.0);
  const Tensor w43 = wrng.uniform_tensor({4, 3}, -2.0, 2.0);
  const Tensor w26 = wrng.uniform_tensor({2, 6}, -2.0, 2.0);

  auto weighted = [](Graph& g, Var v, const Tensor& w) { return g.sum(g.mul(v, g.constant(w))); };

  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.add(x, g.constant(w23)), w23); }, {2, 3}, 1);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.mul(x, g.constant(w23)), w23); }, {2, 3}, 2);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.add(g.constant(w23), x), w23); }, {1, 3}, 3);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.mul(g.constant(w23), x), w23); }, {2, 1}, 4);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.matmul(x, g.constant(w32)), w22); }, {2, 3}, 5);
  OpGradientCheck::run([&](Graph& g, Var x) { return weighted(g, g.neg(x), w23); }, {2, 3}, 6);
  OpGradientCheck::run([&](Graph& g, Var x) { return weighted(g, g.scale(x, -1.75), w23); },
                       {2, 3}, 7);
  OpGradientCheck::run([&](Graph& g, Var x) { return weighted(g, g.exp(x), w23); }, {2, 3}, 8);
  OpGradientCheck::run(
      [&](Graph& g, Var x) {
        // shift keeps the argument positive over the probe range
        return weighted(g, g.log(g.add(x, g.constant(Tensor::full({2, 3}, 3.0)))), w23);
      },
      {2, 3}, 9);
  OpGradientCheck::run([&](Graph& g, Var x) { return weighted(g, g.sigmoid(x), w23); }, {2, 3},
                       10);
  OpGradientCheck::run([&](Graph& g, Var x) { return weighted(g, g.softmax(x), w23); }, {2, 3},
                       11);
  OpGradientCheck::run([&](Graph& g, Var x) { return weighted(g, g.log_softmax(x), w23); }, {2, 3},
                       12);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.gather_rows(x, {0, 2, 2}), w33); },
      {4, 3}, 13);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.gather_cols(x, {1, 0, 1}), w23); },
      {2, 4}, 14);
  OpGradientCheck::run([&](Graph& g, Var x) { return g.sum(x); }, {2, 3}, 15);
  OpGradientCheck::run([&](Graph& g, Var x) { return g.mean(x); }, {2, 3}, 16);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.sum_axis(x, 0), w13); }, {2, 3}, 17);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.mean_axis(x, 1), w21); }, {2, 3}, 18);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.concat({x, g.constant(w23)}, 0), w43); },
      {2, 3}, 19);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.concat({x, g.constant(w23)}, 1), w26); },
      {2, 3}, 20);
  OpGradientCheck::run(
      [&](Graph& g, Var x) { return weighted(g, g.transpose(x), w32); }, {2, 3}, 21);
}

TEST(Graph, BackwardIsLinearInSeed) {
  Rng rng(5);
  Tensor x0 = rng.uniform_tensor({2, 2}, -2.0, 2.0);
  Graph g;
  Var x = g.param(x0);
  Var y = g.matmul(x, x);  // fan-out through both operands

  Tensor seed1 = rng.uniform_tensor({2, 2}, -1.0, 1.0);
  Tensor seed2 = rng.uniform_tensor({2, 2}, -1.0, 1.0);
  const double a = 0.7, b = -1.3;
  Tensor mixed({2, 2});
  for (int i = 0; i < 4; ++i) mixed[i] = a * seed1[i] + b * seed2[i];

  g.backward(y, seed1);
  Tensor g1 = g.grad(x);
  g.backward(y, seed2);
  Tensor g2 = g.grad(x);
  g.backward(y, mixed);
  Tensor gm = g.grad(x);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(gm[i], a * g1[i] + b * g2[i], 1e-12);
  }
}

TEST(Graph, GradientAccumulatesAcrossFanOut) {
  Graph g;
  Var x = g.param(Tensor::scalar(2.0));
  Var y = g.add(g.mul(x, x), g.mul(x, x));
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 8.0);
}

TEST(Graph, ForwardIsDeterministic) {
  auto run = [] {
    Rng rng(77);
    Graph g;
    Var a = g.param(rng.uniform_tensor({4, 4}, -2.0, 2.0));
    Var out = g.sum(g.softmax(g.matmul(a, g.transpose(a))));
    return g.value(out)[0];
  };
  const double first = run();
  for (int i = 0; i < 3; ++i) EXPECT_EQ(run(), first);
}

TEST(Graph, ShapeErrorsNameTheOp) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 2}));
  try {
    g.matmul(a, b);
    FAIL() << "expected shape rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  try {
    g.add(a, b);
    FAIL() << "expected shape rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
  }
}

TEST(Graph, RejectsNonFiniteSoftmaxAndLog) {
  Graph g;
  Tensor bad = Tensor::vector({0.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(g.softmax(g.constant(bad)), std::domain_error);
  EXPECT_THROW(g.log_softmax(g.constant(bad)), std::domain_error);
  EXPECT_THROW(g.log(g.constant(Tensor::vector({-1.0}))), std::domain_error);
  Tensor inf = Tensor::vector({std::numeric_limits<double>::infinity()});
  EXPECT_THROW(g.log(g.constant(inf)), std::domain_error);
}

TEST(Graph, GatherRejectsOutOfRange) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  EXPECT_THROW(g.gather_rows(a, {2}), std::invalid_argument);
  EXPECT_THROW(g.gather_cols(a, {-1}), std::invalid_argument);
}

TEST(Graph, SoftmaxRowsSumToOne) {
  Rng rng(3);
  Graph g;
  Var s = g.softmax(g.constant(rng.uniform_tensor({5, 7}, -30.0, 30.0)));
  for (int i = 0; i < 5; ++i) {
    double total = 0.0;
    for (int j = 0; j < 7; ++j) total += g.value(s).at(i, j);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Graph, UnusedParamGetsZeroGradient) {
  Graph g;
  Var used = g.param(Tensor::scalar(1.0));
  Var unused = g.param(Tensor::vector({1.0, 2.0}));
  Var y = g.mul(used, used);
  g.backward(y);
  EXPECT_EQ(max_abs(g.grad(unused)), 0.0);
}

}  // namespace
}  // namespace ropo
