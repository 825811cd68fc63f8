// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/preference.hpp"

#include <cmath>

#include "ropo/graph.hpp"

namespace ropo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log sigmoid(x) = softplus(-x), branch-stable for large |x|
double neg_log_sigmoid(double x) {
  if (x >= 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

void check_finite(const PairLogps& logps) {
  if (!std::isfinite(logps.policy_chosen) || !std::isfinite(logps.policy_rejected) ||
      !std::isfinite(logps.ref_chosen) || !std::isfinite(logps.ref_rejected)) {
    throw std::domain_error("dpo_loss: non-finite sequence log-probability");
  }
}

void apply_adam(std::vector<NamedParam>& params,
                const std::vector<std::pair<std::string, Tensor>>& grads,
                const TrainHyperparams& hyper, AdamState& adam, double lr) {
  adam.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.adam_beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(hyper.adam_beta2, static_cast<double>(adam.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& value = *params[i].tensor;
    const Tensor& grad = grads[i].second;
    auto it = adam.moments.find(params[i].name);
    if (it == adam.moments.end()) {
      it = adam.moments
               .emplace(params[i].name,
                        std::pair<Tensor, Tensor>{Tensor(value.shape()), Tensor(value.shape())})
               .first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (int k = 0; k < value.size(); ++k) {
      m[k] = hyper.adam_beta1 * m[k] + (1.0 - hyper.adam_beta1) * grad[k];
      v[k] = hyper.adam_beta2 * v[k] + (1.0 - hyper.adam_beta2) * grad[k] * grad[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + hyper.adam_epsilon);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> collect_grads(Graph& g, const PolicyBinding& binding) {
  std::vector<std::pair<std::string, Tensor>> grads;
  grads.reserve(binding.param_vars.size());
  for (const auto& [name, var] : binding.param_vars) grads.emplace_back(name, g.grad(var));
  return grads;
}

}  // namespace

void TrainHyperparams::validate() const {
  if (beta <= 0.0) throw std::invalid_argument("TrainHyperparams: beta must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw std::invalid_argument("TrainHyperparams: warmup fraction must lie in [0, 1)");
  }
  if (batch_size < 1 || steps < 0) {
    throw std::invalid_argument("TrainHyperparams: batch size and steps must be positive");
  }
  if (learning_rate < 0.0) {
    throw std::invalid_argument("TrainHyperparams: learning rate must be nonnegative");
  }
}

double scheduled_lr(const TrainHyperparams& hyper, long step, long total_steps) {
  const long warmup = static_cast<long>(hyper.warmup_fraction * static_cast<double>(total_steps));
  if (warmup > 0 && step <= warmup) {
    return hyper.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double progress = total_steps == warmup
                              ? 1.0
                              : static_cast<double>(step - warmup) /
                                    static_cast<double>(total_steps - warmup);
  return hyper.learning_rate * 0.5 * (1.0 + std::cos(kPi * progress));
}

DpoResult dpo_loss(const PairLogps& logps, double beta) {
  check_finite(logps);
  const double margin = beta * ((logps.policy_chosen - logps.ref_chosen) -
                                (logps.policy_rejected - logps.ref_rejected));
  return DpoResult{neg_log_sigmoid(margin), margin};
}

double preference_probability(const PairLogps& logps, double beta) {
  check_finite(logps);
  const double gamma = beta * (logps.ref_chosen - logps.ref_rejected);
  return stable_sigmoid(beta * (logps.policy_chosen - logps.policy_rejected) - gamma);
}

double reward_accuracy(const std::vector<PairLogps>& batch, double beta) {
  if (batch.empty()) throw std::invalid_argument("reward_accuracy: empty batch");
  double wins = 0.0;
  for (const PairLogps& logps : batch) {
    const double margin = dpo_loss(logps, beta).reward_margin;
    if (margin > 0.0) {
      wins += 1.0;
    } else if (margin == 0.0) {
      wins += 0.5;
    }
  }
  return wins / static_cast<double>(batch.size());
}

PairLogps compute_pair_logps(const PolicyModel& policy, const PolicyModel& reference,
                             const PreferencePair& pair) {
  PairLogps logps;
  logps.policy_chosen = policy.sequence_logprob(pair.prompt, pair.chosen);
  logps.policy_rejected = policy.sequence_logprob(pair.prompt, pair.rejected);
  logps.ref_chosen = reference.sequence_logprob(pair.prompt, pair.chosen);
  logps.ref_rejected = reference.sequence_logprob(pair.prompt, pair.rejected);
  return logps;
}

StepReport train_step(PolicyModel& model, const PolicyModel& reference,
                      const std::vector<PreferencePair>& batch, const TrainHyperparams& hyper,
                      AdamState& adam, long step_index, long total_steps) {
  hyper.validate();
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  Graph g;
  PolicyBinding binding = bind_policy(g, model, BindScope::kTrainable);

  StepReport report;
  report.step = step_index;
  report.lr = scheduled_lr(hyper, step_index, total_steps);

  std::vector<Var> losses;
  std::vector<PairLogps> batch_logps;
  losses.reserve(batch.size());
  for (const PreferencePair& pair : batch) {
    PairLogps logps;
    logps.ref_chosen = reference.sequence_logprob(pair.prompt, pair.chosen);
    logps.ref_rejected = reference.sequence_logprob(pair.prompt, pair.rejected);
    Var pc = sequence_logprob_on_graph(g, binding, pair.prompt, pair.chosen);
    Var pr = sequence_logprob_on_graph(g, binding, pair.prompt, pair.rejected);
    logps.policy_chosen = g.value(pc)[0];
    logps.policy_rejected = g.value(pr)[0];
    batch_logps.push_back(logps);

    Var diff_c = g.add(pc, g.constant(Tensor::scalar(-logps.ref_chosen)));
    Var diff_r = g.add(pr, g.constant(Tensor::scalar(-logps.ref_rejected)));
    Var margin = g.scale(g.add(diff_c, g.neg(diff_r)), hyper.beta);
    losses.push_back(g.neg(g.log(g.sigmoid(margin))));

    report.mean_policy_chosen += logps.policy_chosen;
    report.mean_policy_rejected += logps.policy_rejected;
    report.mean_ref_chosen += logps.ref_chosen;
    report.mean_ref_rejected += logps.ref_rejected;
  }
  const double count = static_cast<double>(batch.size());
  report.mean_policy_chosen /= count;
  report.mean_policy_rejected /= count;
  report.mean_ref_chosen /= count;
  report.mean_ref_rejected /= count;
  report.reward_accuracy = reward_accuracy(batch_logps, hyper.beta);

  Var loss = g.mean(g.concat(losses, 0));
  report.loss = g.value(loss)[0];
  if (!std::isfinite(report.loss)) {
    throw TrainAbort(step_index, "non-finite preference loss");
  }
  g.backward(loss);

  auto grads = collect_grads(g, binding);
  auto params = model.trainable_params();
  apply_adam(params, grads, hyper, adam, report.lr);
  return report;
}

SftStepReport sft_step(PolicyModel& model, const std::vector<PreferencePair>& batch,
                       const TrainHyperparams& hyper, AdamState& adam, long step_index,
                       long total_steps) {
  hyper.validate();
  if (batch.empty()) throw std::invalid_argument("sft_step: empty batch");

  Graph g;
  PolicyBinding binding = bind_policy(g, model, BindScope::kTrainable);

  std::vector<Var> logps;
  long token_count = 0;
  for (const PreferencePair& pair : batch) {
    logps.push_back(sequence_logprob_on_graph(g, binding, pair.prompt, pair.chosen));
    token_count += static_cast<long>(pair.chosen.size());
  }
  if (token_count == 0) throw std::invalid_argument("sft_step: no completion tokens in batch");
  Var loss = g.scale(g.sum(g.concat(logps, 0)), -1.0 / static_cast<double>(token_count));

  SftStepReport report;
  report.step = step_index;
  report.lr = scheduled_lr(hyper, step_index, total_steps);
  report.loss = g.value(loss)[0];
  if (!std::isfinite(report.loss)) {
    throw TrainAbort(step_index, "non-finite cross-entropy loss");
  }
  g.backward(loss);

  auto grads = collect_grads(g, binding);
  auto params = model.trainable_params();
  apply_adam(params, grads, hyper, adam, report.lr);
  return report;
}

DivergenceRecord track_divergence(const PolicyModel& policy, const PolicyModel& reference,
                                  const std::vector<PreferencePair>& heldout) {
  if (heldout.empty()) throw std::invalid_argument("track_divergence: empty held-out set");
  DivergenceRecord record;
  long chosen_tokens = 0, rejected_tokens = 0;

  auto accumulate_kl = [&](const std::vector<int>& prompt, const std::vector<int>& completion,
                           double& kl_acc) {
    std::vector<int> tokens = prompt;
    tokens.insert(tokens.end(), completion.begin(), completion.end());
    const Tensor pol = policy.position_distributions(tokens);
    const Tensor ref = reference.position_distributions(tokens);
    const int first_row = static_cast<int>(prompt.size()) - 1;
    for (int s = 0; s < static_cast<int>(completion.size()); ++s) {
      double kl = 0.0;
      for (int v = 0; v < pol.cols(); ++v) {
        const double lr_ref = ref.at(first_row + s, v);
        kl += std::exp(lr_ref) * (lr_ref - pol.at(first_row + s, v));
      }
      kl_acc += kl;
    }
  };

  for (const PreferencePair& pair : heldout) {
    const double pc = policy.sequence_logprob(pair.prompt, pair.chosen);
    const double pr = policy.sequence_logprob(pair.prompt, pair.rejected);
    const double rc = reference.sequence_logprob(pair.prompt, pair.chosen);
    const double rr = reference.sequence_logprob(pair.prompt, pair.rejected);
    record.seq_chosen += rc - pc;
    record.seq_rejected += rr - pr;
    record.token_chosen += rc - pc;
    record.token_rejected += rr - pr;
    chosen_tokens += static_cast<long>(pair.chosen.size());
    rejected_tokens += static_cast<long>(pair.rejected.size());
    accumulate_kl(pair.prompt, pair.chosen, record.kl_token_chosen);
    accumulate_kl(pair.prompt, pair.rejected, record.kl_token_rejected);
  }

  const double pairs = static_cast<double>(heldout.size());
  record.seq_chosen /= pairs;
  record.seq_rejected /= pairs;
  record.token_chosen /= static_cast<double>(chosen_tokens);
  record.token_rejected /= static_cast<double>(rejected_tokens);
  record.kl_token_chosen /= static_cast<double>(chosen_tokens);
  record.kl_token_rejected /= static_cast<double>(rejected_tokens);
  return record;
}

}  // namespace ropo
