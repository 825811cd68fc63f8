// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace ropo {

using Shape = std::vector<int>;

// Dense row-major array of 64-bit floats, rank 1..3. Value semantics: copies
// are deep, moves are cheap. Graph owns all differentiable math; the methods
// here are shape bookkeeping plus plain helpers for oracles, I/O and tests.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(int n);
  // Unit basis column e_k as a rank-1 vector of length n.
  static Tensor basis(int n, int k);

  int rank() const { return static_cast<int>(shape_.size()); }
  const Shape& shape() const { return shape_; }
  int dim(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // Rank-2 conveniences.
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_string() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain dense helpers (no tape). Used by oracles, merges and tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transposed(const Tensor& a);
Tensor matvec(const Tensor& a, const Tensor& x);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double vector_norm(const Tensor& v);

}  // namespace ropo
