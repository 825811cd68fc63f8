// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/ropo_layer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ropo {

DecomposedWeight::DecomposedWeight(Tensor w) : frozen_(std::move(w)) {
  if (frozen_.rank() != 2) {
    throw std::invalid_argument("DecomposedWeight: rank-2 weight required");
  }
  const int d = frozen_.rows(), n = frozen_.cols();
  if (d < 2) throw std::invalid_argument("DecomposedWeight: input dimension must be at least 2");
  column_norms_ = Tensor({n, 1});
  direction_ = frozen_;
  for (int j = 0; j < n; ++j) {
    double norm = 0.0;
    for (int i = 0; i < d; ++i) norm += frozen_.at(i, j) * frozen_.at(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      throw std::invalid_argument("DecomposedWeight: zero column " + std::to_string(j));
    }
    column_norms_.at(j, 0) = norm;
    for (int i = 0; i < d; ++i) direction_.at(i, j) /= norm;
  }
  magnitude_ = column_norms_;
  rotation_ = MultiGranularityRotation::identity(d);
}

Tensor DecomposedWeight::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.rows() != input_dim()) {
    throw std::invalid_argument("DecomposedWeight::forward: input must have " +
                                std::to_string(input_dim()) + " rows");
  }
  const Tensor rotated = apply_fast(rotation_, direction_);
  Tensor z = matmul(transposed(rotated), x);  // n x T
  for (int j = 0; j < z.rows(); ++j)
    for (int t = 0; t < z.cols(); ++t) z.at(j, t) *= magnitude_.at(j, 0);
  return z;
}

Tensor DecomposedWeight::merge() const {
  Tensor merged = apply_fast(rotation_, direction_);
  for (int j = 0; j < merged.cols(); ++j)
    for (int i = 0; i < merged.rows(); ++i) merged.at(i, j) *= magnitude_.at(j, 0);
  return merged;
}

int DecomposedWeight::trainable_count() const {
  return rotation_.trainable_count() + output_dim();
}

LayerFootprint footprint(int d, int n) {
  if (d < 2) throw std::invalid_argument("footprint: d must be at least 2");
  if (n < 1) throw std::invalid_argument("footprint: n must be positive");
  LayerFootprint f;
  f.d = d;
  f.n = n;
  f.trainable_count = 3L * d - 1 + n;
  f.frozen_count = static_cast<long>(d) * n;
  return f;
}

DecomposedWeightVars bind_decomposed(Graph& g, const DecomposedWeight& layer, bool trainable) {
  DecomposedWeightVars vars;
  vars.rot = bind_rotation(g, layer.rotation(), trainable);
  vars.magnitude = trainable ? g.param(layer.magnitude()) : g.constant(layer.magnitude());
  vars.direction = g.constant(layer.direction());
  return vars;
}

Var rotated_direction_on_graph(Graph& g, const DecomposedWeight& layer,
                               const DecomposedWeightVars& vars) {
  return rotate_on_graph(g, layer.rotation().plan, vars.rot, vars.direction);
}

Var decomposed_forward_on_graph(Graph& g, const DecomposedWeightVars& vars, Var rotated_direction,
                                Var x) {
  Var z = g.matmul(g.transpose(rotated_direction), x);
  return g.mul(z, vars.magnitude);
}

}  // namespace ropo
