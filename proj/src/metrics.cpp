// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace ropo {

namespace {

constexpr double kCoincidenceTol = 1e-12;

// Unit-normalized columns of w; throws naming the first zero column.
Tensor normalized_columns(const Tensor& w) {
  if (w.rank() != 2) throw std::invalid_argument("hyperspherical_energy: rank-2 matrix required");
  Tensor unit = w;
  for (int j = 0; j < w.cols(); ++j) {
    double norm = 0.0;
    for (int i = 0; i < w.rows(); ++i) norm += w.at(i, j) * w.at(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      throw std::invalid_argument("hyperspherical_energy: zero column " + std::to_string(j));
    }
    for (int i = 0; i < w.rows(); ++i) unit.at(i, j) /= norm;
  }
  return unit;
}

double column_distance(const Tensor& unit, int a, int b) {
  double acc = 0.0;
  for (int i = 0; i < unit.rows(); ++i) {
    const double diff = unit.at(i, a) - unit.at(i, b);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

double hyperspherical_energy(const Tensor& w) {
  const Tensor unit = normalized_columns(w);
  const int n = unit.cols();
  if (n < 2) throw std::invalid_argument("hyperspherical_energy: at least two columns required");
  double energy = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double dist = column_distance(unit, a, b);
      if (dist < kCoincidenceTol) {
        throw std::domain_error("hyperspherical_energy: columns " + std::to_string(a) + " and " +
                                std::to_string(b) + " coincide after normalization");
      }
      energy += 2.0 / dist;  // ordered pairs: (a,b) and (b,a)
    }
  }
  return energy;
}

double delta_he(const Tensor& before, const Tensor& after) {
  if (!before.same_shape(after)) {
    throw std::invalid_argument("delta_he: snapshots must share a shape");
  }
  return hyperspherical_energy(after) - hyperspherical_energy(before);
}

EnergyReport energy_report(const std::string& matrix_name, const std::string& baseline_name,
                           const Tensor& before, const Tensor& after) {
  EnergyReport report;
  report.matrix = matrix_name;
  report.baseline = baseline_name;
  report.he_before = hyperspherical_energy(before);
  report.he_after = hyperspherical_energy(after);
  report.delta = report.he_after - report.he_before;

  const Tensor unit = normalized_columns(after);
  double min_dist = std::numeric_limits<double>::infinity();
  double sum_dist = 0.0;
  int count = 0;
  for (int a = 0; a < unit.cols(); ++a) {
    for (int b = a + 1; b < unit.cols(); ++b) {
      const double dist = column_distance(unit, a, b);
      min_dist = std::min(min_dist, dist);
      sum_dist += dist;
      ++count;
    }
  }
  report.min_pair_distance = min_dist;
  report.mean_pair_distance = sum_dist / count;
  return report;
}

double distinct_n(const std::vector<std::vector<int>>& generations, int n, bool per_sequence) {
  if (n < 1) throw std::invalid_argument("distinct_n: n must be positive");
  if (per_sequence) {
    double sum = 0.0;
    int counted = 0;
    for (const auto& seq : generations) {
      if (static_cast<int>(seq.size()) < n) continue;
      std::set<std::vector<int>> grams;
      const int total = static_cast<int>(seq.size()) - n + 1;
      for (int i = 0; i < total; ++i) grams.insert({seq.begin() + i, seq.begin() + i + n});
      sum += static_cast<double>(grams.size()) / total;
      ++counted;
    }
    if (counted == 0) {
      throw std::invalid_argument("distinct_n: no sequence long enough for n-grams");
    }
    return sum / counted;
  }
  std::set<std::vector<int>> grams;
  long total = 0;
  for (const auto& seq : generations) {
    if (static_cast<int>(seq.size()) < n) continue;
    for (size_t i = 0; i + static_cast<size_t>(n) <= seq.size(); ++i) {
      grams.insert({seq.begin() + static_cast<long>(i), seq.begin() + static_cast<long>(i) + n});
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("distinct_n: no sequence long enough for n-grams");
  return static_cast<double>(grams.size()) / static_cast<double>(total);
}

double diversity(const std::vector<std::vector<int>>& generations) {
  std::array<double, 4> values{};
  for (int n = 1; n <= 4; ++n) values[static_cast<size_t>(n - 1)] = distinct_n(generations, n);
  return diversity_from_distinct(values);
}

double diversity_from_distinct(const std::array<double, 4>& distinct) {
  double product = 1.0;
  for (double v : distinct) product *= v;
  return std::pow(product, 0.25);
}

double length_weighted_winrate(double win_rate, double reference_length,
                               double candidate_length) {
  if (reference_length <= 0.0 || candidate_length <= 0.0) {
    throw std::invalid_argument("length_weighted_winrate: lengths must be positive");
  }
  return win_rate * reference_length / candidate_length;
}

void export_neurons(const Tensor& w, const std::string& path) {
  const Tensor unit = normalized_columns(w);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_neurons: cannot open " + path);
  out << "neuron_id";
  for (int i = 0; i < unit.rows(); ++i) out << ",c" << i;
  out << "\n";
  char buf[64];
  for (int j = 0; j < unit.cols(); ++j) {
    out << j;
    for (int i = 0; i < unit.rows(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", unit.at(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out.good()) throw std::runtime_error("export_neurons: write failed for " + path);
}

}  // namespace ropo
