// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/rotations.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace ropo {

namespace {

constexpr double kUnitTol = 1e-12;

void check_rank1(const Tensor& v, const char* what) {
  if (v.rank() != 1) throw std::invalid_argument(std::string(what) + ": rank-1 vector required");
}

class NormalizeOp final : public CustomOp {
 public:
  const char* name() const override { return "normalize"; }

  Tensor forward(const std::vector<const Tensor*>& in) const override {
    return normalized(*in[0]);
  }

  void backward(const Tensor& g, const std::vector<const Tensor*>& in, const Tensor& out,
                const std::vector<Tensor*>& din) const override {
    if (!din[0]) return;
    const double norm = vector_norm(*in[0]);
    double radial = 0.0;
    for (int i = 0; i < out.size(); ++i) radial += out[i] * g[i];
    for (int i = 0; i < out.size(); ++i) (*din[0])[i] += (g[i] - out[i] * radial) / norm;
  }
};

// y = x - 2 u (u^T x); u unit-length by construction upstream.
class HouseholderApplyOp final : public CustomOp {
 public:
  const char* name() const override { return "householder_apply"; }

  Tensor forward(const std::vector<const Tensor*>& in) const override {
    return householder_apply(*in[0], *in[1]);
  }

  void backward(const Tensor& g, const std::vector<const Tensor*>& in, const Tensor&,
                const std::vector<Tensor*>& din) const override {
    const Tensor& u = *in[0];
    const Tensor& x = *in[1];
    const int d = x.rows(), n = x.cols();
    if (din[1]) {
      // dX = dY - 2 u (u^T dY)
      for (int t = 0; t < n; ++t) {
        double w = 0.0;
        for (int r = 0; r < d; ++r) w += u[r] * g.at(r, t);
        for (int r = 0; r < d; ++r) din[1]->at(r, t) += g.at(r, t) - 2.0 * u[r] * w;
      }
    }
    if (din[0]) {
      // du = -2 (X (dY^T u) + dY (X^T u))
      for (int t = 0; t < n; ++t) {
        double gu = 0.0, xu = 0.0;
        for (int r = 0; r < d; ++r) {
          gu += g.at(r, t) * u[r];
          xu += x.at(r, t) * u[r];
        }
        for (int r = 0; r < d; ++r) (*din[0])[r] += -2.0 * (x.at(r, t) * gu + g.at(r, t) * xu);
      }
    }
  }
};

// One disjoint-pair rotation stage reading its slice of the shared angle
// vector. Inputs: [theta_full, x].
class GivensStageOp final : public CustomOp {
 public:
  GivensStageOp(std::vector<std::pair<int, int>> pairs, int angle_offset)
      : pairs_(std::move(pairs)), angle_offset_(angle_offset) {}

  const char* name() const override { return "givens_stage"; }

  Tensor forward(const std::vector<const Tensor*>& in) const override {
    return givens_stage_apply(pairs_, in[0]->data() + angle_offset_, *in[1]);
  }

  void backward(const Tensor& g, const std::vector<const Tensor*>& in, const Tensor&,
                const std::vector<Tensor*>& din) const override {
    const Tensor& theta = *in[0];
    const Tensor& x = *in[1];
    const int n = x.cols();
    if (din[1]) {
      // dX = G^T dY; start from the pass-through rows.
      Tensor& dx = *din[1];
      std::vector<bool> rotated(static_cast<size_t>(x.rows()), false);
      for (const auto& [i, j] : pairs_) rotated[static_cast<size_t>(i)] = rotated[static_cast<size_t>(j)] = true;
      for (int r = 0; r < x.rows(); ++r) {
        if (rotated[static_cast<size_t>(r)]) continue;
        for (int t = 0; t < n; ++t) dx.at(r, t) += g.at(r, t);
      }
      for (size_t k = 0; k < pairs_.size(); ++k) {
        const auto [i, j] = pairs_[k];
        const double c = std::cos(theta[angle_offset_ + static_cast<int>(k)]);
        const double s = std::sin(theta[angle_offset_ + static_cast<int>(k)]);
        for (int t = 0; t < n; ++t) {
          dx.at(i, t) += c * g.at(i, t) - s * g.at(j, t);
          dx.at(j, t) += s * g.at(i, t) + c * g.at(j, t);
        }
      }
    }
    if (din[0]) {
      for (size_t k = 0; k < pairs_.size(); ++k) {
        const auto [i, j] = pairs_[k];
        const double c = std::cos(theta[angle_offset_ + static_cast<int>(k)]);
        const double s = std::sin(theta[angle_offset_ + static_cast<int>(k)]);
        double acc = 0.0;
        for (int t = 0; t < n; ++t) {
          acc += g.at(i, t) * (-s * x.at(i, t) + c * x.at(j, t));
          acc += g.at(j, t) * (-c * x.at(i, t) - s * x.at(j, t));
        }
        (*din[0])[angle_offset_ + static_cast<int>(k)] += acc;
      }
    }
  }

 private:
  std::vector<std::pair<int, int>> pairs_;
  int angle_offset_;
};

}  // namespace

GivensPlan GivensPlan::butterfly(int d) {
  if (d < 2) throw std::invalid_argument("GivensPlan: dimension must be at least 2");
  GivensPlan plan;
  plan.dim = d;
  for (int k = 0; 2 * k + 1 < d; ++k) plan.stage_one.emplace_back(2 * k, 2 * k + 1);
  for (int k = 0; 2 * k + 2 < d; ++k) plan.stage_two.emplace_back(2 * k + 1, 2 * k + 2);
  return plan;
}

HouseholderPair HouseholderPair::identity_init(int d) {
  HouseholderPair h;
  h.v1 = Tensor::basis(d, 0);
  h.v2 = Tensor::basis(d, 0);
  return h;
}

Tensor HouseholderPair::u1() const { return normalized(v1); }
Tensor HouseholderPair::u2() const { return normalized(v2); }

MultiGranularityRotation MultiGranularityRotation::identity(int d) {
  MultiGranularityRotation rot;
  rot.plan = GivensPlan::butterfly(d);
  rot.theta = Tensor({d - 1});
  rot.house = HouseholderPair::identity_init(d);
  return rot;
}

Tensor givens_matrix(int d, int i, int j, double theta) {
  if (i < 0 || i >= j || j >= d) {
    throw std::invalid_argument("givens_matrix: indices must satisfy 0 <= i < j < d");
  }
  Tensor g = Tensor::identity(d);
  const double c = std::cos(theta), s = std::sin(theta);
  g.at(i, i) = c;
  g.at(j, j) = c;
  g.at(i, j) = s;
  g.at(j, i) = -s;
  return g;
}

Tensor householder_matrix(const Tensor& u) {
  check_rank1(u, "householder_matrix");
  const double norm = vector_norm(u);
  if (norm == 0.0) throw std::invalid_argument("householder_matrix: zero vector");
  if (std::abs(norm - 1.0) > kUnitTol) {
    throw std::invalid_argument("householder_matrix: unit vector required");
  }
  const int d = u.size();
  Tensor h = Tensor::identity(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) h.at(i, j) -= 2.0 * u[i] * u[j];
  return h;
}

Tensor normalized(const Tensor& v) {
  check_rank1(v, "normalized");
  const double norm = vector_norm(v);
  if (norm == 0.0) throw std::invalid_argument("normalized: zero vector");
  Tensor u = v;
  for (int i = 0; i < u.size(); ++i) u[i] /= norm;
  return u;
}

Tensor materialize(const MultiGranularityRotation& rot) {
  const int d = rot.plan.dim;
  if (rot.theta.size() != rot.plan.angle_count()) {
    throw std::invalid_argument("materialize: angle vector length must be d-1");
  }
  Tensor acc = Tensor::identity(d);
  int k = 0;
  for (const auto& [i, j] : rot.plan.stage_one) acc = matmul(acc, givens_matrix(d, i, j, rot.theta[k++]));
  for (const auto& [i, j] : rot.plan.stage_two) acc = matmul(acc, givens_matrix(d, i, j, rot.theta[k++]));
  acc = matmul(acc, householder_matrix(rot.house.u1()));
  acc = matmul(acc, householder_matrix(rot.house.u2()));
  return acc;
}

Tensor givens_stage_apply(const std::vector<std::pair<int, int>>& pairs, const double* angles,
                          const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("givens_stage_apply: rank-2 input required");
  Tensor y = x;  // pass-through rows keep their values
  const int n = x.cols();
  for (size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const double c = std::cos(angles[k]), s = std::sin(angles[k]);
    const double* xi = x.data() + static_cast<size_t>(i) * n;
    const double* xj = x.data() + static_cast<size_t>(j) * n;
    double* yi = y.data() + static_cast<size_t>(i) * n;
    double* yj = y.data() + static_cast<size_t>(j) * n;
    for (int t = 0; t < n; ++t) {
      yi[t] = c * xi[t] + s * xj[t];
      yj[t] = -s * xi[t] + c * xj[t];
    }
  }
  return y;
}

Tensor householder_apply(const Tensor& u, const Tensor& x) {
  check_rank1(u, "householder_apply");
  if (x.rank() != 2 || x.rows() != u.size()) {
    throw std::invalid_argument("householder_apply: row count must match reflection dimension");
  }
  const int d = x.rows(), n = x.cols();
  Tensor y = x;
  for (int t = 0; t < n; ++t) {
    double w = 0.0;
    for (int r = 0; r < d; ++r) w += u[r] * x.at(r, t);
    w *= 2.0;
    for (int r = 0; r < d; ++r) y.at(r, t) -= u[r] * w;
  }
  return y;
}

Tensor apply_fast(const MultiGranularityRotation& rot, const Tensor& x) {
  if (x.rank() != 2 || x.rows() != rot.plan.dim) {
    throw std::invalid_argument("apply_fast: input must have " + std::to_string(rot.plan.dim) +
                                " rows");
  }
  Tensor t = householder_apply(rot.house.u2(), x);
  t = householder_apply(rot.house.u1(), t);
  const int stage_two_offset = static_cast<int>(rot.plan.stage_one.size());
  t = givens_stage_apply(rot.plan.stage_two, rot.theta.data() + stage_two_offset, t);
  t = givens_stage_apply(rot.plan.stage_one, rot.theta.data(), t);
  return t;
}

RotationGradients rotation_gradients(const MultiGranularityRotation& rot, const Tensor& upstream,
                                     const Tensor& x) {
  Graph g;
  RotationVars vars = bind_rotation(g, rot, /*trainable=*/true);
  Var xv = g.param(x);
  Var y = rotate_on_graph(g, rot.plan, vars, xv);
  g.backward(y, upstream);
  return RotationGradients{g.grad(vars.theta), g.grad(vars.v1), g.grad(vars.v2), g.grad(xv)};
}

std::vector<PlaneRotation> solve_ladder_angles(const Tensor& v, const Tensor& y) {
  check_rank1(v, "solve_ladder_angles");
  check_rank1(y, "solve_ladder_angles");
  if (v.size() != y.size() || v.size() < 2) {
    throw std::invalid_argument("solve_ladder_angles: vectors must share a dimension >= 2");
  }
  if (std::abs(vector_norm(v) - 1.0) > kUnitTol || std::abs(vector_norm(y) - 1.0) > kUnitTol) {
    throw std::invalid_argument("solve_ladder_angles: unit vectors required");
  }
  const int d = v.size();

  // Ladder that zeroes coordinates 0..d-2 in order, leaving +e_{d-1}.
  auto ladder = [d](Tensor x) {
    std::vector<PlaneRotation> steps;
    for (int k = 0; k + 1 < d; ++k) {
      const double a = x[k], b = x[k + 1];
      const double angle = std::atan2(-a, b);
      const double c = std::cos(angle), s = std::sin(angle);
      x[k] = c * a + s * b;
      x[k + 1] = -s * a + c * b;
      steps.push_back(PlaneRotation{k, k + 1, angle});
    }
    return steps;
  };

  std::vector<PlaneRotation> chain;
  for (const PlaneRotation& r : ladder(v)) {
    if (r.theta != 0.0) chain.push_back(r);
  }
  std::vector<PlaneRotation> to_target = ladder(y);
  for (auto it = to_target.rbegin(); it != to_target.rend(); ++it) {
    if (it->theta != 0.0) chain.push_back(PlaneRotation{it->i, it->j, -it->theta});
  }
  return chain;
}

Tensor apply_plane_chain(const std::vector<PlaneRotation>& chain, const Tensor& v) {
  check_rank1(v, "apply_plane_chain");
  Tensor x = v;
  for (const PlaneRotation& r : chain) {
    x = matvec(givens_matrix(x.size(), r.i, r.j, r.theta), x);
  }
  return x;
}

RotationVars bind_rotation(Graph& g, const MultiGranularityRotation& rot, bool trainable) {
  RotationVars vars;
  if (trainable) {
    vars.theta = g.param(rot.theta);
    vars.v1 = g.param(rot.house.v1);
    vars.v2 = g.param(rot.house.v2);
  } else {
    vars.theta = g.constant(rot.theta);
    vars.v1 = g.constant(rot.house.v1);
    vars.v2 = g.constant(rot.house.v2);
  }
  return vars;
}

Var rotate_on_graph(Graph& g, const GivensPlan& plan, const RotationVars& vars, Var x) {
  static const auto normalize_op = std::make_shared<const NormalizeOp>();
  static const auto householder_op = std::make_shared<const HouseholderApplyOp>();
  Var u1 = g.custom(normalize_op, {vars.v1});
  Var u2 = g.custom(normalize_op, {vars.v2});
  Var t = g.custom(householder_op, {u2, x});
  t = g.custom(householder_op, {u1, t});
  const int offset = static_cast<int>(plan.stage_one.size());
  t = g.custom(std::make_shared<const GivensStageOp>(plan.stage_two, offset), {vars.theta, t});
  t = g.custom(std::make_shared<const GivensStageOp>(plan.stage_one, 0), {vars.theta, t});
  return t;
}

}  // namespace ropo
