// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ropo/policy.hpp"
#include "ropo/tensor.hpp"

namespace ropo {

struct PreferencePair {
  std::vector<int> prompt;
  std::vector<int> chosen;
  std::vector<int> rejected;
};

// Sequence log-probabilities entering the preference objective.
struct PairLogps {
  double policy_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
};

struct TrainHyperparams {
  double beta = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int steps = 1000;
  double warmup_fraction = 0.1;  // of total steps, linear ramp
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 1;

  void validate() const;
};

// Cosine decay with linear warmup; step is 1-based.
double scheduled_lr(const TrainHyperparams& hyper, long step, long total_steps);

struct AdamState {
  long step = 0;
  // param name -> (first moment, second moment)
  std::map<std::string, std::pair<Tensor, Tensor>> moments;
};

// Raised when a training loss turns non-finite; carries the failing step.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(long step, const std::string& what)
      : std::runtime_error("training aborted at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

struct DpoResult {
  double loss = 0.0;
  double reward_margin = 0.0;
};

// loss = -log sigmoid(margin) with
// margin = beta * ((policy_chosen - ref_chosen) - (policy_rejected - ref_rejected)).
DpoResult dpo_loss(const PairLogps& logps, double beta);

// sigma(beta * (policy_chosen - policy_rejected) - gamma) with the reference
// log-ratio folded into the constant gamma; identical to sigma(margin).
double preference_probability(const PairLogps& logps, double beta);

// Fraction of pairs with positive margin; exact ties count one half.
double reward_accuracy(const std::vector<PairLogps>& batch, double beta);

PairLogps compute_pair_logps(const PolicyModel& policy, const PolicyModel& reference,
                             const PreferencePair& pair);

struct StepReport {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double reward_accuracy = 0.0;
  double mean_policy_chosen = 0.0;
  double mean_policy_rejected = 0.0;
  double mean_ref_chosen = 0.0;
  double mean_ref_rejected = 0.0;
};

// One Adam update of the model's trainables on the mean preference loss.
StepReport train_step(PolicyModel& model, const PolicyModel& reference,
                      const std::vector<PreferencePair>& batch, const TrainHyperparams& hyper,
                      AdamState& adam, long step_index, long total_steps);

struct SftStepReport {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean per-token cross entropy over chosen completions
};

SftStepReport sft_step(PolicyModel& model, const std::vector<PreferencePair>& batch,
                       const TrainHyperparams& hyper, AdamState& adam, long step_index,
                       long total_steps);

// Suppression proxies on a held-out set, split by completion class. The first
// four fields are realized-token log-ratios log(ref) - log(policy); the last
// two are exact per-position KL(ref || policy) averaged over positions, which
// stays affordable at toy vocabulary sizes.
struct DivergenceRecord {
  double token_chosen = 0.0;
  double token_rejected = 0.0;
  double seq_chosen = 0.0;
  double seq_rejected = 0.0;
  double kl_token_chosen = 0.0;
  double kl_token_rejected = 0.0;
};

DivergenceRecord track_divergence(const PolicyModel& policy, const PolicyModel& reference,
                                  const std::vector<PreferencePair>& heldout);

}  // namespace ropo
