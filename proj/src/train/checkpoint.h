// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Single-file checkpoint archive:
//   "SSCK" | u32 format version | u64 header length | JSON header |
//   parameter blobs | optimizer moments | u64 FNV-1a checksum of all
//   preceding bytes.
// The header carries the config snapshot, progress counters and the
// serialized RNG state. Parameters are raw little-endian float32 in
// creation order; names and shapes in the header must match on load.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "model/model.h"
#include "train/optimizer.h"

namespace stepsep::train {

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointState {
  nlohmann::json run_config;  // RunConfig snapshot
  int epoch = 0;              // completed epochs
  int64_t step = 0;           // completed optimizer steps
  double best_valid = 0;      // best validation delta SI-SNR so far
  bool has_best = false;
  std::string rng_state;
};

void SaveCheckpoint(const std::string& path, const model::Model<float>& model,
                    const Adam<float>* optimizer, const CheckpointState& state);

struct LoadedCheckpoint {
  ModelConfig model_config;
  CheckpointState state;
  uint64_t init_seed = 0;
  std::vector<std::vector<float>> params;  // same order as the model store
  std::vector<std::vector<float>> adam_m, adam_v;
  int64_t adam_steps = 0;
  bool has_optimizer = false;

  // Builds a model with the stored architecture and weights.
  std::unique_ptr<model::Model<float>> BuildModel() const;
  void RestoreOptimizer(Adam<float>& optimizer) const;
};

LoadedCheckpoint LoadCheckpoint(const std::string& path);

}  // namespace stepsep::train
