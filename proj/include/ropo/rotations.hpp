// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "ropo/graph.hpp"
#include "ropo/tensor.hpp"

namespace ropo {

// Fixed two-stage butterfly arrangement of d-1 planar rotations: stage one
// pairs (0,1),(2,3),... and stage two pairs (1,2),(3,4),... Angles are stored
// stage-one first. For odd d the last index sits out of stage one; indices 0
// and d-1 sit out of stage two.
struct GivensPlan {
  int dim = 0;
  std::vector<std::pair<int, int>> stage_one;
  std::vector<std::pair<int, int>> stage_two;

  static GivensPlan butterfly(int d);
  int angle_count() const { return dim - 1; }
};

// Two unconstrained vectors whose normalized forms parameterize a pair of
// reflections. Normalization happens in the forward pass so the unit
// constraint holds exactly at every optimizer step.
struct HouseholderPair {
  Tensor v1;  // rank-1, length d
  Tensor v2;

  static HouseholderPair identity_init(int d);
  Tensor u1() const;
  Tensor u2() const;
};

// Trainable orthogonal factor: two disjoint-plane rotation stages composed
// with two reflections. (d-1) + 2d trainable scalars.
struct MultiGranularityRotation {
  GivensPlan plan;
  Tensor theta;  // rank-1, length d-1, stage-one angles first
  HouseholderPair house;

  static MultiGranularityRotation identity(int d);
  int dim() const { return plan.dim; }
  int trainable_count() const { return (plan.dim - 1) + 2 * plan.dim; }
};

// Single planar rotation step: apply angle theta in the (i, j) plane.
struct PlaneRotation {
  int i = 0;
  int j = 0;
  double theta = 0.0;
};

// Dense d x d planar rotation: cos at (i,i),(j,j), +sin at (i,j), -sin at (j,i).
Tensor givens_matrix(int d, int i, int j, double theta);

// Dense reflection I - 2 u u^T for a unit vector u.
Tensor householder_matrix(const Tensor& u);

// Unit-normalized copy of v. Throws on the zero vector.
Tensor normalized(const Tensor& v);

// Dense materialization of the full factor via explicit matrix products.
// Serves as the independent oracle for apply_fast.
Tensor materialize(const MultiGranularityRotation& rot);

// One rotation stage applied through the elementwise cos/sin interleave.
// angles points at the stage's slice of the angle vector.
Tensor givens_stage_apply(const std::vector<std::pair<int, int>>& pairs, const double* angles,
                          const Tensor& x);

// X - 2 u (u^T X) without forming the d x d reflection.
Tensor householder_apply(const Tensor& u, const Tensor& x);

// R * X through the sparse path: two rank-1 reflection updates then the two
// interleaved rotation stages. Never materializes R.
Tensor apply_fast(const MultiGranularityRotation& rot, const Tensor& x);

// Gradients of sum(upstream .* (R*X)) w.r.t. theta, v1, v2 and X, computed
// by the tape rules registered for the rotation ops.
struct RotationGradients {
  Tensor theta;
  Tensor v1;
  Tensor v2;
  Tensor x;
};
RotationGradients rotation_gradients(const MultiGranularityRotation& rot, const Tensor& upstream,
                                     const Tensor& x);

// Chain of adjacent-plane rotations mapping unit v to unit y: a ladder that
// zeroes coordinates 0..d-2 of v (landing on +e_{d-1}), then the reversed
// negated ladder of y. Applied first-to-last. Identity steps are dropped, so
// the chain holds at most 2(d-1) entries.
std::vector<PlaneRotation> solve_ladder_angles(const Tensor& v, const Tensor& y);

// Apply a plane-rotation chain to a vector via dense matrices (oracle path).
Tensor apply_plane_chain(const std::vector<PlaneRotation>& chain, const Tensor& v);

// Tape handles for one rotation's trainables.
struct RotationVars {
  Var theta;
  Var v1;
  Var v2;
};

// Register the rotation's raw parameters on a graph (as trainables or
// constants) and build the subgraph computing R * x.
RotationVars bind_rotation(Graph& g, const MultiGranularityRotation& rot, bool trainable);
Var rotate_on_graph(Graph& g, const GivensPlan& plan, const RotationVars& vars, Var x);

}  // namespace ropo
