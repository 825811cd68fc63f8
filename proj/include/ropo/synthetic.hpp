// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ropo/preference.hpp"
#include "ropo/rng.hpp"

namespace ropo {

struct SyntheticTaskConfig {
  uint64_t grammar_seed = 7;
  int vocab_size = 32;
  int context_length = 64;
  int prompt_len = 6;
  int chosen_min_len = 10;  // completion length before the end token
  int chosen_max_len = 16;
  int rejected_prefix_max = 2;  // correct steps before the derail
  int rejected_extra_min = 6;   // repetition overrun beyond the chosen length
  int rejected_extra_max = 12;
  double repeat_penalty = 1.0;
  double length_penalty = 0.5;
  int target_len = 16;  // completions beyond this pay the length penalty

  void validate() const;
};

// Deterministic next-token grammar: a single seeded cycle over tokens
// 1..vocab-1 (token 0 ends a sequence). Chosen completions continue the
// cycle and stop near the target length; rejected ones derail into literal
// repetition and run long, the degenerate shape preference training should
// steer away from.
class SyntheticTask {
 public:
  explicit SyntheticTask(const SyntheticTaskConfig& cfg);

  const SyntheticTaskConfig& config() const { return cfg_; }
  int next_token(int token) const;

  // +1 per correct cycle transition, -1 per wrong one, minus repetition and
  // excess-length penalties; scoring stops at the first end token.
  double score(const std::vector<int>& prompt, const std::vector<int>& completion) const;

  PreferencePair make_pair(Rng& rng) const;

 private:
  SyntheticTaskConfig cfg_;
  std::vector<int> next_;
};

// Deterministic in the seed; every emitted pair satisfies
// score(chosen) > score(rejected).
std::vector<PreferencePair> generate_pairs(const SyntheticTask& task, int count, uint64_t seed);

}  // namespace ropo
