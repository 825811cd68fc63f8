// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "ropo/tensor.hpp"

namespace ropo {

// Sum over ordered pairs i != j of inverse distance between unit-normalized
// columns. Throws on zero columns and on coincident normalized columns (the
// energy diverges there; clamping would silently distort comparisons).
double hyperspherical_energy(const Tensor& w);

// HE(after) - HE(before).
double delta_he(const Tensor& before, const Tensor& after);

// Per-matrix energy snapshot against a named baseline. The convention flag
// records that ordered pairs are counted (each unordered pair twice).
struct EnergyReport {
  std::string matrix;
  std::string baseline;
  double he_before = 0.0;
  double he_after = 0.0;
  double delta = 0.0;
  std::string pair_convention = "ordered";
  double min_pair_distance = 0.0;   // over unit columns of the current snapshot
  double mean_pair_distance = 0.0;
};

EnergyReport energy_report(const std::string& matrix_name, const std::string& baseline_name,
                           const Tensor& before, const Tensor& after);

// Corpus-pooled distinct n-gram ratio in (0, 1]. With per_sequence set the
// ratio is instead averaged over sequences long enough to hold an n-gram.
double distinct_n(const std::vector<std::vector<int>>& generations, int n,
                  bool per_sequence = false);

// Geometric mean of Distinct-1..4.
double diversity(const std::vector<std::vector<int>>& generations);
double diversity_from_distinct(const std::array<double, 4>& distinct);

// wr * reference_length / candidate_length.
double length_weighted_winrate(double win_rate, double reference_length, double candidate_length);

// Unit-normalized columns as CSV rows: header "neuron_id,c0,...,c{d-1}", 17
// significant digits so a parse reproduces the doubles bit-exactly.
void export_neurons(const Tensor& w, const std::string& path);

}  // namespace ropo
