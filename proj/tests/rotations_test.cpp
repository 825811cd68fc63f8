// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/rotations.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "ropo/rng.hpp"
#include "test_util.hpp"

namespace ropo {
namespace {

using testing::det_lu;
using testing::max_rel_err;

MultiGranularityRotation random_rotation(int d, Rng& rng, double angle_range = 3.0) {
  MultiGranularityRotation rot = MultiGranularityRotation::identity(d);
  rot.theta = rng.uniform_tensor({d - 1}, -angle_range, angle_range);
  rot.house.v1 = rng.normal_tensor({d});
  rot.house.v2 = rng.normal_tensor({d});
  return rot;
}

TEST(GivensPlan, ButterflyPairCounts) {
  for (int d : {2, 3, 4, 5, 8, 9, 64}) {
    GivensPlan plan = GivensPlan::butterfly(d);
    EXPECT_EQ(static_cast<int>(plan.stage_one.size()), d / 2);
    EXPECT_EQ(static_cast<int>(plan.stage_two.size()), (d + 1) / 2 - 1);
    EXPECT_EQ(static_cast<int>(plan.stage_one.size() + plan.stage_two.size()), d - 1);
    for (const auto& [i, j] : plan.stage_one) {
      EXPECT_LT(i, j);
      EXPECT_LT(j, d);
    }
    for (const auto& [i, j] : plan.stage_two) {
      EXPECT_LT(i, j);
      EXPECT_LT(j, d);
    }
  }
  EXPECT_THROW(GivensPlan::butterfly(1), std::invalid_argument);
}

TEST(GivensMatrix, ZeroAngleIsIdentity) {
  EXPECT_EQ(max_abs_diff(givens_matrix(2, 0, 1, 0.0), Tensor::identity(2)), 0.0);
}

TEST(GivensMatrix, QuarterTurnSignConvention) {
  Tensor g = givens_matrix(2, 0, 1, M_PI_2);
  Tensor want = Tensor::matrix({{0.0, 1.0}, {-1.0, 0.0}});
  EXPECT_LT(max_abs_diff(g, want), 1e-15);
}

TEST(GivensMatrix, EmbeddedBlockMatchesDenseConstruction) {
  const double theta = 0.3;
  Tensor g = givens_matrix(3, 0, 2, theta);
  // brute force: place the 2x2 rotation block inside an identity
  Tensor want = Tensor::identity(3);
  want.at(0, 0) = std::cos(theta);
  want.at(2, 2) = std::cos(theta);
  want.at(0, 2) = std::sin(theta);
  want.at(2, 0) = -std::sin(theta);
  EXPECT_EQ(max_abs_diff(g, want), 0.0);
  Rng rng(21);
  for (int t = 0; t < 3; ++t) {
    Tensor v = rng.normal_tensor({3});
    EXPECT_LT(max_abs_diff(matvec(g, v), matvec(want, v)), 1e-15);
  }
}

TEST(GivensMatrix, RejectsBadIndices) {
  EXPECT_THROW(givens_matrix(3, 1, 1, 0.5), std::invalid_argument);
  EXPECT_THROW(givens_matrix(3, 2, 1, 0.5), std::invalid_argument);
  EXPECT_THROW(givens_matrix(3, 0, 3, 0.5), std::invalid_argument);
}

TEST(Householder, AxisReflection) {
  Tensor h = householder_matrix(Tensor::basis(3, 0));
  Tensor want = Tensor::matrix({{-1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
  EXPECT_EQ(max_abs_diff(h, want), 0.0);
}

TEST(Householder, InvolutionAndOrthogonality) {
  Rng rng(17);
  for (int t = 0; t < 5; ++t) {
    Tensor u = rng.unit_vector(8);
    Tensor h = householder_matrix(u);
    EXPECT_LT(max_abs_diff(matmul(h, h), Tensor::identity(8)), 1e-14);
    EXPECT_LT(max_abs_diff(matmul(transposed(h), h), Tensor::identity(8)), 1e-14);
  }
}

TEST(Householder, RejectsNonUnitOrZero) {
  EXPECT_THROW(householder_matrix(Tensor({3})), std::invalid_argument);
  EXPECT_THROW(householder_matrix(Tensor::vector({0.5, 0.5, 0.5})), std::invalid_argument);
}

TEST(Materialize, IdentityAtInitialization) {
  for (int d : {2, 3, 8}) {
    Tensor r = materialize(MultiGranularityRotation::identity(d));
    EXPECT_EQ(max_abs_diff(r, Tensor::identity(d)), 0.0);
  }
}

TEST(Materialize, AngleParameterCount) {
  MultiGranularityRotation rot = MultiGranularityRotation::identity(8);
  EXPECT_EQ(rot.theta.size(), 7);
  EXPECT_EQ(rot.trainable_count(), 7 + 16);
}

TEST(Materialize, OrthogonalForRandomParameters) {
  Rng rng(2024);
  for (int d : {4, 8, 64}) {
    for (int t = 0; t < 5; ++t) {
      MultiGranularityRotation rot = random_rotation(d, rng);
      Tensor r = materialize(rot);
      EXPECT_LT(max_abs_diff(matmul(transposed(r), r), Tensor::identity(d)), 1e-10);
    }
  }
}

TEST(Materialize, NormPreservation) {
  Rng rng(31);
  for (int d : {3, 8}) {
    MultiGranularityRotation rot = random_rotation(d, rng);
    Tensor r = materialize(rot);
    for (int t = 0; t < 5; ++t) {
      Tensor x = rng.normal_tensor({d});
      const double ratio = vector_norm(matvec(r, x)) / vector_norm(x);
      EXPECT_NEAR(ratio, 1.0, 1e-10);
    }
  }
}

TEST(Materialize, DeterminantsOfFactorsAndProduct) {
  Rng rng(47);
  const int d = 6;
  EXPECT_NEAR(det_lu(givens_matrix(d, 1, 4, 0.77)), 1.0, 1e-12);
  Tensor u = rng.unit_vector(d);
  EXPECT_NEAR(det_lu(householder_matrix(u)), -1.0, 1e-12);

  MultiGranularityRotation rot = random_rotation(d, rng);
  Tensor htilde = matmul(householder_matrix(rot.house.u1()), householder_matrix(rot.house.u2()));
  EXPECT_NEAR(det_lu(htilde), 1.0, 1e-10);
  EXPECT_NEAR(det_lu(materialize(rot)), 1.0, 1e-8);
}

TEST(ApplyFast, IdentityAtInitialization) {
  Rng rng(7);
  Tensor x = rng.normal_tensor({5, 3});
  Tensor y = apply_fast(MultiGranularityRotation::identity(5), x);
  EXPECT_EQ(max_abs_diff(y, x), 0.0);
}

TEST(ApplyFast, QuarterTurnColumn) {
  MultiGranularityRotation rot = MultiGranularityRotation::identity(2);
  rot.theta[0] = M_PI_2;
  Tensor x({2, 1});
  x.at(0, 0) = 1.0;
  Tensor y = apply_fast(rot, x);
  EXPECT_NEAR(y.at(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(y.at(1, 0), -1.0, 1e-15);
}

TEST(ApplyFast, MatchesDensePath) {
  Rng rng(123);
  for (int d : {2, 3, 4, 8, 64}) {
    for (int t = 0; t < 4; ++t) {
      MultiGranularityRotation rot = random_rotation(d, rng);
      Tensor x = rng.normal_tensor({d, 5});
      Tensor dense = matmul(materialize(rot), x);
      EXPECT_LT(max_abs_diff(apply_fast(rot, x), dense), 1e-12);
    }
  }
  // larger batch at d = 64
  MultiGranularityRotation rot = random_rotation(64, rng);
  Tensor x = rng.normal_tensor({64, 16});
  EXPECT_LT(max_abs_diff(apply_fast(rot, x), matmul(materialize(rot), x)), 1e-12);
}

TEST(ApplyFast, RejectsRowMismatch) {
  MultiGranularityRotation rot = MultiGranularityRotation::identity(4);
  EXPECT_THROW(apply_fast(rot, Tensor({3, 2})), std::invalid_argument);
}

TEST(RotationGradients, SingleAngleCosineDerivative) {
  MultiGranularityRotation rot = MultiGranularityRotation::identity(2);
  const double theta = 0.6;
  rot.theta[0] = theta;
  Tensor x({2, 1});
  x.at(0, 0) = 1.0;
  // f = first coordinate of G e1 = cos(theta)
  Tensor upstream({2, 1});
  upstream.at(0, 0) = 1.0;
  RotationGradients grads = rotation_gradients(rot, upstream, x);
  EXPECT_NEAR(grads.theta[0], -std::sin(theta), 1e-14);
}

TEST(RotationGradients, RawVectorGradientIsOrthogonalToUnit) {
  Rng rng(88);
  const int d = 6;
  MultiGranularityRotation rot = random_rotation(d, rng);
  Tensor x = rng.normal_tensor({d, 3});
  Tensor upstream = rng.normal_tensor({d, 3});
  RotationGradients grads = rotation_gradients(rot, upstream, x);
  const Tensor u1 = rot.house.u1();
  const Tensor u2 = rot.house.u2();
  double dot1 = 0.0, dot2 = 0.0;
  for (int i = 0; i < d; ++i) {
    dot1 += u1[i] * grads.v1[i];
    dot2 += u2[i] * grads.v2[i];
  }
  EXPECT_NEAR(dot1, 0.0, 1e-10);
  EXPECT_NEAR(dot2, 0.0, 1e-10);
}

TEST(RotationGradients, MatchFiniteDifferencesOnsquaredError) {
  Rng rng(404);
  const int d = 8;
  MultiGranularityRotation rot = random_rotation(d, rng);
  Tensor x = rng.normal_tensor({d, 4});
  Tensor target = rng.normal_tensor({d, 4});

  auto loss_for = [&](const MultiGranularityRotation& r) {
    Tensor y = apply_fast(r, x);
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      const double e = y[i] - target[i];
      acc += e * e;
    }
    return acc;
  };

  // upstream gradient of sum((y - target)^2) w.r.t. y
  Tensor y = apply_fast(rot, x);
  Tensor upstream(y.shape());
  for (int i = 0; i < y.size(); ++i) upstream[i] = 2.0 * (y[i] - target[i]);
  RotationGradients grads = rotation_gradients(rot, upstream, x);

  Tensor fd_theta = finite_difference_gradient(
      [&](const Tensor& th) {
        MultiGranularityRotation r = rot;
        r.theta = th;
        return loss_for(r);
      },
      rot.theta);
  EXPECT_LT(max_rel_err(grads.theta, fd_theta), 1e-6);

  Tensor fd_v1 = finite_difference_gradient(
      [&](const Tensor& v) {
        MultiGranularityRotation r = rot;
        r.house.v1 = v;
        return loss_for(r);
      },
      rot.house.v1);
  EXPECT_LT(max_rel_err(grads.v1, fd_v1), 1e-6);

  Tensor fd_v2 = finite_difference_gradient(
      [&](const Tensor& v) {
        MultiGranularityRotation r = rot;
        r.house.v2 = v;
        return loss_for(r);
      },
      rot.house.v2);
  EXPECT_LT(max_rel_err(grads.v2, fd_v2), 1e-6);

  Tensor fd_x = finite_difference_gradient(
      [&](const Tensor& probe) {
        Tensor yy = apply_fast(rot, probe);
        double acc = 0.0;
        for (int i = 0; i < yy.size(); ++i) {
          const double e = yy[i] - target[i];
          acc += e * e;
        }
        return acc;
      },
      x);
  EXPECT_LT(max_rel_err(grads.x, fd_x), 1e-6);
}

TEST(SolveLadder, TwoDimensionalQuarterTurn) {
  auto chain = solve_ladder_angles(Tensor::basis(2, 0), Tensor::basis(2, 1));
  ASSERT_EQ(chain.size(), 1u);
  EXPECT_EQ(chain[0].i, 0);
  EXPECT_EQ(chain[0].j, 1);
  EXPECT_NEAR(chain[0].theta, -M_PI_2, 1e-15);
}

TEST(SolveLadder, SameVectorComposesToIdentity) {
  Rng rng(9);
  Tensor v = rng.unit_vector(5);
  auto chain = solve_ladder_angles(v, v);
  Tensor out = apply_plane_chain(chain, v);
  EXPECT_LT(max_abs_diff(out, v), 1e-10);
}

TEST(SolveLadder, RandomUnitPairsRoundTrip) {
  Rng rng(2718);
  for (int d : {3, 8, 32}) {
    for (int t = 0; t < 20; ++t) {
      Tensor v = rng.unit_vector(d);
      Tensor y = rng.unit_vector(d);
      auto chain = solve_ladder_angles(v, y);
      EXPECT_LE(chain.size(), 2u * static_cast<size_t>(d - 1));
      for (const PlaneRotation& r : chain) EXPECT_EQ(r.j, r.i + 1);
      Tensor out = apply_plane_chain(chain, v);
      double err = 0.0;
      for (int i = 0; i < d; ++i) err += (out[i] - y[i]) * (out[i] - y[i]);
      EXPECT_LT(std::sqrt(err), 1e-8);
    }
  }
}

TEST(SolveLadder, RejectsNonUnitInput) {
  EXPECT_THROW(solve_ladder_angles(Tensor::vector({1.0, 1.0}), Tensor::basis(2, 0)),
               std::invalid_argument);
}

// The trained arrangement fixes the plane order up front, unlike the ladder.
// Whether it can reach every target exactly is left numerically open: run a
// short optimization of the stage angles toward random targets and record the
// residuals, asserting progress rather than surjectivity.
TEST(ButterflyArrangement, AngleFitResidualsReported) {
  Rng rng(5150);
  for (int d : {3, 4, 8}) {
    MultiGranularityRotation rot = MultiGranularityRotation::identity(d);
    Tensor v = rng.unit_vector(d);
    Tensor y = rng.unit_vector(d);
    Tensor vcol({d, 1});
    for (int i = 0; i < d; ++i) vcol.at(i, 0) = v[i];

    auto residual = [&](const Tensor& th) {
      MultiGranularityRotation r = rot;
      r.theta = th;
      Tensor out = apply_fast(r, vcol);
      double acc = 0.0;
      for (int i = 0; i < d; ++i) {
        const double e = out.at(i, 0) - y[i];
        acc += e * e;
      }
      return acc;
    };

    // plain Adam over the d-1 angles
    Tensor th({d - 1});
    Tensor m({d - 1}), s({d - 1});
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double initial = residual(th);
    for (int it = 1; it <= 3000; ++it) {
      MultiGranularityRotation r = rot;
      r.theta = th;
      Tensor out = apply_fast(r, vcol);
      Tensor upstream({d, 1});
      for (int i = 0; i < d; ++i) upstream.at(i, 0) = 2.0 * (out.at(i, 0) - y[i]);
      RotationGradients grads = rotation_gradients(r, upstream, vcol);
      for (int k = 0; k < d - 1; ++k) {
        m[k] = b1 * m[k] + (1 - b1) * grads.theta[k];
        s[k] = b2 * s[k] + (1 - b2) * grads.theta[k] * grads.theta[k];
        const double mh = m[k] / (1 - std::pow(b1, it));
        const double sh = s[k] / (1 - std::pow(b2, it));
        th[k] -= lr * mh / (std::sqrt(sh) + eps);
      }
    }
    const double final = residual(th);
    std::cout << "[butterfly-fit] d=" << d << " initial residual " << initial
              << " final residual " << final << "\n";
    EXPECT_LT(final, initial * 0.5);
  }
}

}  // namespace
}  // namespace ropo
