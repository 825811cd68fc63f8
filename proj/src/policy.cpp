// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ropo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ropo/rng.hpp"

namespace ropo {

namespace {

constexpr double kRmsEps = 1e-8;
constexpr double kMaskValue = -1e9;

void check_tokens(const PolicyConfig& cfg, const std::vector<int>& tokens, const char* what) {
  for (int t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw std::invalid_argument(std::string(what) + ": token id " + std::to_string(t) +
                                  " outside vocabulary of size " + std::to_string(cfg.vocab_size));
    }
  }
}

// Mean-square normalization with a trainable gain, built from tape ops.
Var rms_norm(Graph& g, Var x, Var gain) {
  const int cols = g.value(x).cols();
  Var ms = g.mean_axis(g.mul(x, x), 0);  // 1 x T
  Var shifted = g.add(ms, g.constant(Tensor::full({1, cols}, kRmsEps)));
  Var inv_rms = g.exp(g.scale(g.log(shifted), -0.5));
  return g.mul(g.mul(x, inv_rms), gain);
}

Var project(Graph& g, const PolicyBinding::LayerBinding& lb, bool is_query, Var x) {
  const Var t = is_query ? lb.q_t : lb.v_t;
  const Var mag = is_query ? lb.q_mag : lb.v_mag;
  Var z = g.matmul(t, x);
  if (mag.valid()) z = g.mul(z, mag);
  return z;
}

// Full forward over a token sequence; returns vocab x T logits.
Var forward_logits(Graph& g, const PolicyBinding& binding, const std::vector<int>& tokens) {
  const PolicyConfig& cfg = binding.model->cfg;
  const int t_len = static_cast<int>(tokens.size());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));

  Tensor mask({t_len, t_len});
  for (int i = 0; i < t_len; ++i)
    for (int j = i + 1; j < t_len; ++j) mask.at(i, j) = kMaskValue;
  Var mask_var = g.constant(mask);

  Var x = g.gather_cols(binding.embedding, tokens);  // d x T
  for (const auto& lb : binding.layers) {
    Var xn = rms_norm(g, x, lb.gain1);
    Var q = project(g, lb, /*is_query=*/true, xn);
    Var k = g.matmul(lb.k_t, xn);
    Var v = project(g, lb, /*is_query=*/false, xn);
    Var scores = g.add(g.scale(g.matmul(g.transpose(q), k), inv_sqrt_d), mask_var);
    Var attn = g.matmul(v, g.transpose(g.softmax(scores)));
    x = g.add(x, g.matmul(lb.o_t, attn));

    Var xm = rms_norm(g, x, lb.gain2);
    Var h = g.matmul(lb.w1_t, xm);
    Var act = g.mul(h, g.sigmoid(h));
    x = g.add(x, g.matmul(lb.w2_t, act));
  }
  return g.matmul(binding.head_t, x);  // vocab x T
}

}  // namespace

void PolicyConfig::validate() const {
  if (model_dim < 2) throw std::invalid_argument("PolicyConfig: model_dim must be at least 2");
  if (context_length < 2) {
    throw std::invalid_argument("PolicyConfig: context_length must be at least 2");
  }
  if (vocab_size < 2 || num_layers < 1 || mlp_hidden < 1) {
    throw std::invalid_argument("PolicyConfig: sizes must be positive");
  }
}

PolicyModel PolicyModel::random_init(const PolicyConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  PolicyModel model;
  model.cfg = cfg;
  model.cfg.wrap_mode = WrapMode::kNone;  // wrapping happens explicitly
  const int d = cfg.model_dim, h = cfg.mlp_hidden;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
  model.embedding = rng.normal_tensor({d, cfg.vocab_size}, 0.1);
  if (!cfg.tied_head) model.head = rng.normal_tensor({d, cfg.vocab_size}, 0.1);
  model.layers.resize(static_cast<size_t>(cfg.num_layers));
  for (auto& layer : model.layers) {
    layer.q.dense = rng.normal_tensor({d, d}, proj_std);
    layer.wk = rng.normal_tensor({d, d}, proj_std);
    layer.v.dense = rng.normal_tensor({d, d}, proj_std);
    layer.wo = rng.normal_tensor({d, d}, proj_std);
    layer.gain1 = Tensor::ones({d, 1});
    layer.gain2 = Tensor::ones({d, 1});
    layer.w1 = rng.normal_tensor({d, h}, proj_std);
    layer.w2 = rng.normal_tensor({h, d}, 1.0 / std::sqrt(static_cast<double>(h)));
  }
  if (cfg.wrap_mode == WrapMode::kRopo) model.wrap_ropo();
  return model;
}

void PolicyModel::wrap_ropo() {
  if (cfg.wrap_mode == WrapMode::kRopo) {
    throw std::logic_error("wrap_ropo: model is already wrapped");
  }
  for (auto& layer : layers) {
    layer.q.ropo.emplace(layer.q.dense);
    layer.v.ropo.emplace(layer.v.dense);
  }
  cfg.wrap_mode = WrapMode::kRopo;
}

double PolicyModel::sequence_logprob(const std::vector<int>& prompt,
                                     const std::vector<int>& completion) const {
  if (completion.empty()) {
    if (prompt.empty()) throw std::invalid_argument("sequence_logprob: empty prompt");
    check_tokens(cfg, prompt, "sequence_logprob");
    return 0.0;
  }
  Graph g;
  PolicyBinding binding = bind_policy(g, *this, BindScope::kFrozen);
  Var lp = sequence_logprob_on_graph(g, binding, prompt, completion);
  return g.value(lp)[0];
}

Tensor PolicyModel::position_distributions(const std::vector<int>& tokens) const {
  if (tokens.size() < 2) {
    throw std::invalid_argument("position_distributions: at least two tokens required");
  }
  check_tokens(cfg, tokens, "position_distributions");
  if (static_cast<int>(tokens.size()) > cfg.context_length) {
    throw std::invalid_argument("position_distributions: sequence exceeds context length");
  }
  Graph g;
  PolicyBinding binding = bind_policy(g, *this, BindScope::kFrozen);
  Var logits = forward_logits(g, binding, tokens);
  std::vector<int> rows(tokens.size() - 1);
  for (size_t i = 0; i + 1 < tokens.size(); ++i) rows[i] = static_cast<int>(i);
  Var dists = g.log_softmax(g.gather_rows(g.transpose(logits), rows));
  return g.value(dists);
}

std::vector<int> PolicyModel::sample(const std::vector<int>& prompt, int max_new_tokens,
                                     double temperature, int top_k, uint64_t seed) const {
  if (prompt.empty()) throw std::invalid_argument("sample: empty prompt");
  if (temperature <= 0.0) throw std::invalid_argument("sample: temperature must be positive");
  if (top_k < 1) throw std::invalid_argument("sample: top_k must be at least 1");
  check_tokens(cfg, prompt, "sample");
  if (static_cast<int>(prompt.size()) >= cfg.context_length) {
    throw std::invalid_argument("sample: prompt fills the context");
  }

  Rng rng(seed);
  std::vector<int> tokens = prompt;
  std::vector<int> generated;
  const int k = std::min(top_k, cfg.vocab_size);
  for (int step = 0; step < max_new_tokens; ++step) {
    Graph g;
    PolicyBinding binding = bind_policy(g, *this, BindScope::kFrozen);
    Var logits = forward_logits(g, binding, tokens);
    const Tensor& lv = g.value(logits);
    const int last = static_cast<int>(tokens.size()) - 1;

    // top-k by logit, ties broken toward lower token ids
    std::vector<int> order(static_cast<size_t>(cfg.vocab_size));
    for (int i = 0; i < cfg.vocab_size; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return lv.at(a, last) > lv.at(b, last); });
    order.resize(static_cast<size_t>(k));

    const double top = lv.at(order[0], last);
    double denom = 0.0;
    std::vector<double> weights(order.size());
    for (size_t i = 0; i < order.size(); ++i) {
      weights[i] = std::exp((lv.at(order[i], last) - top) / temperature);
      denom += weights[i];
    }
    const double draw = rng.uniform() * denom;
    double cum = 0.0;
    int picked = order.back();
    for (size_t i = 0; i < order.size(); ++i) {
      cum += weights[i];
      if (draw < cum) {
        picked = order[i];
        break;
      }
    }

    generated.push_back(picked);
    tokens.push_back(picked);
    if (picked == kEndOfSequence) break;
    if (static_cast<int>(tokens.size()) >= cfg.context_length) break;
  }
  return generated;
}

std::vector<NamedParam> PolicyModel::trainable_params() {
  std::vector<NamedParam> params;
  const bool wrapped = cfg.wrap_mode == WrapMode::kRopo;
  if (!wrapped) {
    params.push_back({"embedding", &embedding});
    if (head) params.push_back({"head", &*head});
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    PolicyLayer& layer = layers[i];
    auto add_projection = [&](const char* tag, WrappedProjection& proj) {
      if (!wrapped) {
        params.push_back({prefix + tag, &proj.dense});
        return;
      }
      DecomposedWeight& dw = *proj.ropo;
      if (cfg.ropo_rotation) {
        params.push_back({prefix + tag + std::string(".theta"), &dw.rotation().theta});
        params.push_back({prefix + tag + std::string(".v1"), &dw.rotation().house.v1});
        params.push_back({prefix + tag + std::string(".v2"), &dw.rotation().house.v2});
      }
      params.push_back({prefix + tag + std::string(".m"), &dw.magnitude()});
    };
    add_projection("wq", layer.q);
    add_projection("wv", layer.v);
    if (!wrapped) {
      params.push_back({prefix + "wk", &layer.wk});
      params.push_back({prefix + "wo", &layer.wo});
      params.push_back({prefix + "gain1", &layer.gain1});
      params.push_back({prefix + "gain2", &layer.gain2});
      params.push_back({prefix + "w1", &layer.w1});
      params.push_back({prefix + "w2", &layer.w2});
    }
  }
  return params;
}

long PolicyModel::trainable_count() {
  long count = 0;
  for (const NamedParam& p : trainable_params()) count += p.tensor->size();
  return count;
}

PolicyBinding bind_policy(Graph& g, const PolicyModel& model, BindScope scope) {
  const bool train = scope == BindScope::kTrainable;
  const bool wrapped = model.cfg.wrap_mode == WrapMode::kRopo;
  PolicyBinding binding;
  binding.model = &model;

  auto leaf = [&](const std::string& name, const Tensor& value, bool trainable) {
    if (train && trainable) {
      Var v = g.param(value);
      binding.param_vars.emplace_back(name, v);
      return v;
    }
    return g.constant(value);
  };

  binding.embedding = leaf("embedding", model.embedding, !wrapped);
  Var head_source = binding.embedding;
  if (model.head) head_source = leaf("head", *model.head, !wrapped);
  binding.head_t = g.transpose(head_source);

  for (size_t i = 0; i < model.layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    const PolicyLayer& layer = model.layers[i];
    PolicyBinding::LayerBinding lb;

    auto bind_projection = [&](const char* tag, const WrappedProjection& proj, Var& t_out,
                               Var& mag_out) {
      if (!proj.wrapped()) {
        t_out = g.transpose(leaf(prefix + tag, proj.dense, !wrapped));
        mag_out = Var{};
        return;
      }
      const DecomposedWeight& dw = *proj.ropo;
      const bool rot_train = train && model.cfg.ropo_rotation;
      RotationVars rot;
      if (rot_train) {
        rot.theta = g.param(dw.rotation().theta);
        binding.param_vars.emplace_back(prefix + tag + std::string(".theta"), rot.theta);
        rot.v1 = g.param(dw.rotation().house.v1);
        binding.param_vars.emplace_back(prefix + tag + std::string(".v1"), rot.v1);
        rot.v2 = g.param(dw.rotation().house.v2);
        binding.param_vars.emplace_back(prefix + tag + std::string(".v2"), rot.v2);
      } else {
        rot = bind_rotation(g, dw.rotation(), /*trainable=*/false);
      }
      mag_out = leaf(prefix + tag + std::string(".m"), dw.magnitude(), true);
      Var rotated = rotate_on_graph(g, dw.rotation().plan, rot, g.constant(dw.direction()));
      t_out = g.transpose(rotated);
    };

    bind_projection("wq", layer.q, lb.q_t, lb.q_mag);
    bind_projection("wv", layer.v, lb.v_t, lb.v_mag);
    lb.k_t = g.transpose(leaf(prefix + "wk", layer.wk, !wrapped));
    lb.o_t = g.transpose(leaf(prefix + "wo", layer.wo, !wrapped));
    lb.gain1 = leaf(prefix + "gain1", layer.gain1, !wrapped);
    lb.gain2 = leaf(prefix + "gain2", layer.gain2, !wrapped);
    lb.w1_t = g.transpose(leaf(prefix + "w1", layer.w1, !wrapped));
    lb.w2_t = g.transpose(leaf(prefix + "w2", layer.w2, !wrapped));
    binding.layers.push_back(lb);
  }
  return binding;
}

Var sequence_logprob_on_graph(Graph& g, const PolicyBinding& binding,
                              const std::vector<int>& prompt, const std::vector<int>& completion) {
  const PolicyModel& model = *binding.model;
  if (prompt.empty()) throw std::invalid_argument("sequence_logprob: empty prompt");
  check_tokens(model.cfg, prompt, "sequence_logprob");
  check_tokens(model.cfg, completion, "sequence_logprob");
  const int total = static_cast<int>(prompt.size() + completion.size());
  if (total > model.cfg.context_length) {
    throw std::invalid_argument("sequence_logprob: sequence of length " + std::to_string(total) +
                                " exceeds context length " +
                                std::to_string(model.cfg.context_length));
  }
  if (completion.empty()) return g.constant(Tensor::scalar(0.0));

  std::vector<int> tokens = prompt;
  tokens.insert(tokens.end(), completion.begin(), completion.end());
  Var logits = forward_logits(g, binding, tokens);

  // rows predicting each completion token from its prefix
  const int p_len = static_cast<int>(prompt.size());
  const int c_len = static_cast<int>(completion.size());
  std::vector<int> rows(static_cast<size_t>(c_len));
  for (int s = 0; s < c_len; ++s) rows[static_cast<size_t>(s)] = p_len - 1 + s;
  Var dists = g.log_softmax(g.gather_rows(g.transpose(logits), rows));

  Tensor pick({c_len, model.cfg.vocab_size});
  for (int s = 0; s < c_len; ++s) pick.at(s, completion[static_cast<size_t>(s)]) = 1.0;
  return g.sum(g.mul(dists, g.constant(pick)));
}

}  // namespace ropo
