// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/synthetic.hpp"

#include <stdexcept>
#include <string>

namespace ropo {

void SyntheticTaskConfig::validate() const {
  if (vocab_size < 4) throw std::invalid_argument("SyntheticTask: vocabulary too small");
  if (prompt_len < 2) throw std::invalid_argument("SyntheticTask: prompt_len must be at least 2");
  if (chosen_min_len < 1 || chosen_max_len < chosen_min_len) {
    throw std::invalid_argument("SyntheticTask: bad chosen length range");
  }
  if (rejected_prefix_max < 0 || rejected_extra_min < 1 ||
      rejected_extra_max < rejected_extra_min) {
    throw std::invalid_argument("SyntheticTask: bad rejected shape");
  }
  const int worst = prompt_len + chosen_max_len + rejected_extra_max + 2;
  if (worst > context_length) {
    throw std::invalid_argument("SyntheticTask: longest pair (" + std::to_string(worst) +
                                ") exceeds context length " + std::to_string(context_length));
  }
}

SyntheticTask::SyntheticTask(const SyntheticTaskConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // seeded Fisher-Yates over 1..vocab-1, closed into one cycle
  std::vector<int> order;
  for (int t = 1; t < cfg_.vocab_size; ++t) order.push_back(t);
  Rng rng(cfg_.grammar_seed);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
  }
  next_.assign(static_cast<size_t>(cfg_.vocab_size), kEndOfSequence);
  for (size_t i = 0; i < order.size(); ++i) {
    next_[static_cast<size_t>(order[i])] = order[(i + 1) % order.size()];
  }
}

int SyntheticTask::next_token(int token) const {
  if (token <= 0 || token >= cfg_.vocab_size) {
    throw std::invalid_argument("SyntheticTask: token outside grammar");
  }
  return next_[static_cast<size_t>(token)];
}

double SyntheticTask::score(const std::vector<int>& prompt,
                            const std::vector<int>& completion) const {
  if (prompt.empty()) throw std::invalid_argument("SyntheticTask::score: empty prompt");
  double total = 0.0;
  int prev = prompt.back();
  for (size_t t = 0; t < completion.size(); ++t) {
    const int tok = completion[t];
    if (tok == kEndOfSequence) break;
    total += tok == next_token(prev) ? 1.0 : -1.0;
    if (tok == prev) total -= cfg_.repeat_penalty;
    if (static_cast<int>(t) >= cfg_.target_len) total -= cfg_.length_penalty;
    prev = tok;
  }
  return total;
}

PreferencePair SyntheticTask::make_pair(Rng& rng) const {
  PreferencePair pair;
  int tok = rng.uniform_int(1, cfg_.vocab_size - 1);
  pair.prompt.push_back(tok);
  for (int i = 1; i < cfg_.prompt_len; ++i) {
    tok = next_token(tok);
    pair.prompt.push_back(tok);
  }

  const int chosen_len = rng.uniform_int(cfg_.chosen_min_len, cfg_.chosen_max_len);
  int c = pair.prompt.back();
  for (int i = 0; i < chosen_len; ++i) {
    c = next_token(c);
    pair.chosen.push_back(c);
  }
  pair.chosen.push_back(kEndOfSequence);

  const int prefix = rng.uniform_int(0, cfg_.rejected_prefix_max);
  const int extra = rng.uniform_int(cfg_.rejected_extra_min, cfg_.rejected_extra_max);
  int r = pair.prompt.back();
  for (int i = 0; i < prefix; ++i) {
    r = next_token(r);
    pair.rejected.push_back(r);
  }
  const int repeats = chosen_len - prefix + extra;
  for (int i = 0; i < repeats; ++i) pair.rejected.push_back(r);
  pair.rejected.push_back(kEndOfSequence);
  return pair;
}

std::vector<PreferencePair> generate_pairs(const SyntheticTask& task, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("generate_pairs: count must be positive");
  Rng rng(seed);
  std::vector<PreferencePair> pairs;
  pairs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    PreferencePair pair = task.make_pair(rng);
    if (!(task.score(pair.prompt, pair.chosen) > task.score(pair.prompt, pair.rejected))) {
      throw std::logic_error("generate_pairs: emitted pair violates the scorer ordering");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace ropo
