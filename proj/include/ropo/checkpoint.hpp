// Copyright 2026 The ropo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ropo/policy.hpp"
#include "ropo/preference.hpp"
#include "ropo/tensor.hpp"

namespace ropo {

// On-disk model state: magic "ROPO", a format version, an endianness marker,
// then named tensor records (length-prefixed UTF-8 name, rank, dims, row-major
// 64-bit floats). Everything is little-endian. Saving and loading round-trips
// doubles bit-exactly.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::vector<std::pair<std::string, Tensor>> entries;

  void add(std::string name, Tensor value);
  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Model plus optimizer moments and the step counter.
Checkpoint snapshot_training_state(const PolicyModel& model, long step, const AdamState* adam);

PolicyModel restore_model(const Checkpoint& ckpt);
long restore_step(const Checkpoint& ckpt);
AdamState restore_adam(const Checkpoint& ckpt);

// Architecture fields of two checkpoints match (wrap mode may differ).
bool same_architecture(const Checkpoint& a, const Checkpoint& b);

// Fold every wrapped projection into a dense matrix; the result is an
// unwrapped model with identical forward behavior.
PolicyModel merge_to_dense(const PolicyModel& model);

}  // namespace ropo
