// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ropo/graph.hpp"
#include "ropo/ropo_layer.hpp"
#include "ropo/tensor.hpp"

namespace ropo {

enum class WrapMode { kNone, kRopo };

// Token id 0 terminates generation.
inline constexpr int kEndOfSequence = 0;

struct PolicyConfig {
  int vocab_size = 32;
  int model_dim = 32;
  int context_length = 64;
  int num_layers = 2;
  int mlp_hidden = 64;
  WrapMode wrap_mode = WrapMode::kNone;
  bool tied_head = true;
  // Ablation hook: with the rotation disabled only the magnitude vector of a
  // wrapped projection trains.
  bool ropo_rotation = true;

  void validate() const;
};

// Query or value projection, optionally tuned through the decomposed form.
struct WrappedProjection {
  Tensor dense;  // d x d; the live weight while unwrapped, the frozen source after
  std::optional<DecomposedWeight> ropo;

  bool wrapped() const { return ropo.has_value(); }
};

struct PolicyLayer {
  WrappedProjection q;
  WrappedProjection v;
  Tensor wk, wo;        // d x d
  Tensor gain1, gain2;  // d x 1 pre-norm scales
  Tensor w1, w2;        // d x h and h x d
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Single-head causal decoder with weight-tied head by default. Hidden states
// are d x T with one column per position; projections apply as W^T x.
struct PolicyModel {
  PolicyConfig cfg;
  Tensor embedding;  // d x vocab
  std::optional<Tensor> head;
  std::vector<PolicyLayer> layers;

  static PolicyModel random_init(const PolicyConfig& cfg, uint64_t seed);

  // Deep frozen copy; training the original never touches the snapshot.
  PolicyModel snapshot_reference() const { return *this; }

  // Convert the q/v projections to decomposed form around the current dense
  // weights. Only valid while unwrapped.
  void wrap_ropo();

  // Sum over completion positions of the causal next-token log-probability.
  double sequence_logprob(const std::vector<int>& prompt,
                          const std::vector<int>& completion) const;

  // Row s holds the log-softmax distribution predicting position s+1 from the
  // prefix tokens[0..s]; shape (T-1) x vocab.
  Tensor position_distributions(const std::vector<int>& tokens) const;

  // Autoregressive top-k sampling at the given temperature, deterministic in
  // the seed. Generation stops at the end token (which is included) or after
  // max_new_tokens.
  std::vector<int> sample(const std::vector<int>& prompt, int max_new_tokens, double temperature,
                          int top_k, uint64_t seed) const;

  // Trainables under the current wrap mode, canonical order.
  std::vector<NamedParam> trainable_params();
  long trainable_count();
};

// Tape bindings for one model. Per-layer effective transposed weights are
// created once so every sequence in a batch reuses them.
struct PolicyBinding {
  struct LayerBinding {
    Var q_t, k_t, v_t, o_t;  // transposed effective projections
    Var q_mag, v_mag;        // engaged only for wrapped projections
    Var gain1, gain2;
    Var w1_t, w2_t;
  };
  const PolicyModel* model = nullptr;
  Var embedding;
  Var head_t;
  std::vector<LayerBinding> layers;
  // Trainable leaves in the same order as PolicyModel::trainable_params.
  std::vector<std::pair<std::string, Var>> param_vars;
};

enum class BindScope { kFrozen, kTrainable };

PolicyBinding bind_policy(Graph& g, const PolicyModel& model, BindScope scope);

// Scalar tape node: log-probability of the completion given the prompt.
Var sequence_logprob_on_graph(Graph& g, const PolicyBinding& binding,
                              const std::vector<int>& prompt, const std::vector<int>& completion);

}  // namespace ropo
