// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/tensor.hpp"

#include <gtest/gtest.h>

#include <stdexcept>

namespace ropo {
namespace {

TEST(Tensor, ShapeAndStorage) {
  Tensor t({2, 3});
  EXPECT_EQ(t.rank(), 2);
  EXPECT_EQ(t.size(), 6);
  t.at(1, 2) = 4.5;
  EXPECT_DOUBLE_EQ(t[5], 4.5);

  Tensor cube({2, 2, 2});
  EXPECT_EQ(cube.rank(), 3);
  EXPECT_EQ(cube.size(), 8);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 0}), std::invalid_argument);
  EXPECT_THROW(Tensor({1, 2, 3, 4}), std::invalid_argument);
  EXPECT_THROW(Tensor({2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST(Tensor, MatmulAgainstIdentity) {
  Tensor a = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
  Tensor prod = matmul(Tensor::identity(2), a);
  EXPECT_EQ(max_abs_diff(prod, a), 0.0);
}

TEST(Tensor, MatmulShapeError) {
  Tensor a({2, 3});
  Tensor b({2, 3});
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
}

TEST(Tensor, TransposeRoundTrip) {
  Tensor a = Tensor::matrix({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
  Tensor tt = transposed(transposed(a));
  EXPECT_EQ(max_abs_diff(tt, a), 0.0);
  EXPECT_DOUBLE_EQ(transposed(a).at(2, 1), 6.0);
}

TEST(Tensor, FiniteCheck) {
  Tensor a = Tensor::matrix({{1.0, 2.0}});
  EXPECT_TRUE(a.all_finite());
  a.at(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(a.all_finite());
}

TEST(Tensor, VectorNorm) {
  EXPECT_DOUBLE_EQ(vector_norm(Tensor::vector({3.0, 4.0})), 5.0);
}

}  // namespace
}  // namespace ropo
