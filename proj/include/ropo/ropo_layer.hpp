// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ropo/graph.hpp"
#include "ropo/rotations.hpp"
#include "ropo/tensor.hpp"

namespace ropo {

// Linear layer state under rotation tuning. The source weight is frozen at
// construction; training moves only the per-column magnitudes and the shared
// rotation. The unit-column direction matrix is precomputed once so a forward
// pass costs one sparse rotation plus a diagonal scale.
class DecomposedWeight {
 public:
  // w: d x n weight whose columns are the neurons. Throws if any column is zero.
  explicit DecomposedWeight(Tensor w);

  int input_dim() const { return frozen_.rows(); }
  int output_dim() const { return frozen_.cols(); }

  const Tensor& frozen() const { return frozen_; }
  const Tensor& direction() const { return direction_; }
  const Tensor& column_norms() const { return column_norms_; }

  Tensor& magnitude() { return magnitude_; }
  const Tensor& magnitude() const { return magnitude_; }
  MultiGranularityRotation& rotation() { return rotation_; }
  const MultiGranularityRotation& rotation() const { return rotation_; }

  // z = magnitude .* (R * direction)^T x for a batch of column inputs (d x T).
  Tensor forward(const Tensor& x) const;

  // Fold rotation, normalization and magnitude into one dense d x n matrix.
  Tensor merge() const;

  int trainable_count() const;

 private:
  Tensor frozen_;        // d x n, never mutated
  Tensor column_norms_;  // n x 1, captured at construction
  Tensor direction_;     // d x n with unit columns
  Tensor magnitude_;     // n x 1, trainable, starts equal to column_norms_
  MultiGranularityRotation rotation_;
};

struct LayerFootprint {
  int d = 0;
  int n = 0;
  long trainable_count = 0;
  long frozen_count = 0;
};

// Parameter accounting for a d x n decomposed layer: (d-1) + 2d + n trainables
// against d*n frozen entries. Rejects d < 2 (no rotation plan exists there).
LayerFootprint footprint(int d, int n);

// Tape handles for one layer's trainables plus its constant direction matrix.
struct DecomposedWeightVars {
  RotationVars rot;
  Var magnitude;
  Var direction;
};

DecomposedWeightVars bind_decomposed(Graph& g, const DecomposedWeight& layer, bool trainable);

// Forward subgraph: magnitude .* ((R * direction)^T x). The rotated direction
// node can be shared across many inputs; pass the result of
// rotated_direction_on_graph to avoid rebuilding it.
Var rotated_direction_on_graph(Graph& g, const DecomposedWeight& layer,
                               const DecomposedWeightVars& vars);
Var decomposed_forward_on_graph(Graph& g, const DecomposedWeightVars& vars, Var rotated_direction,
                                Var x);

}  // namespace ropo
