// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop, evaluation and the ablation driver.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config/config.h"
#include "data/corpus.h"
#include "model/model.h"

namespace stepsep::train {

struct TrainOptions {
  std::string manifest;
  std::string out_dir;
  bool resume = false;  // continue from <out_dir>/last.ckpt
  bool force = false;   // overwrite an existing run directory
};

struct EpochMetrics {
  int epoch = 0;
  int64_t step = 0;
  double loss_coarse = 0;  // epoch means
  double loss_refine = 0;
  double loss_total = 0;
  bool has_refine = false;
  double valid_delta_si_snr = 0;         // refined phase if present, else coarse
  double valid_delta_si_snr_coarse = 0;
  double seconds = 0;
  bool is_best = false;

  nlohmann::json ToJson() const;
};

struct TrainSummary {
  std::vector<EpochMetrics> history;  // epochs run by this call
  int64_t steps = 0;                  // total optimizer steps so far
  double best_valid = 0;
  std::string best_checkpoint;
  std::string last_checkpoint;
  double first_step_loss = 0;  // loss_total of the first step run by this call
};

TrainSummary Train(const RunConfig& run, const TrainOptions& options);

struct PhaseMetrics {
  double delta_si_snr = 0;
  double delta_sdr = 0;
};

struct RecordMetrics {
  std::string id;
  int64_t n_samples = 0;
  PhaseMetrics coarse;
  std::optional<PhaseMetrics> refined;
};

struct EvalReport {
  std::string split;
  std::string variant;
  std::vector<RecordMetrics> rows;
  PhaseMetrics mean_coarse;
  std::optional<PhaseMetrics> mean_refined;

  // Refined phase when present, else coarse.
  double headline_delta_si_snr() const {
    return mean_refined ? mean_refined->delta_si_snr : mean_coarse.delta_si_snr;
  }
  nlohmann::json Summary() const;
};

// Deterministic; records must be non-empty.
EvalReport Evaluate(const model::Model<float>& model,
                    const std::vector<data::MixtureRecord>& records, const std::string& split);

// Loads a manifest split and evaluates. Unknown or empty splits are errors
// naming the valid choices.
EvalReport EvaluateSplit(const model::Model<float>& model, const std::string& manifest,
                         const std::string& split);

// One JSON object per record: see README for the field list.
void WriteReport(const EvalReport& report, const std::string& path);

struct AblationRow {
  std::string block_kind;
  std::string variant;
  int depth = 1;
  std::vector<double> per_seed;  // test delta SI-SNR of the headline phase
  double mean = 0;
  double stddev = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  nlohmann::json ToJson() const;
  std::string ToMarkdown() const;
};

// Trains every variant x block kind (x depth for the deeper-codec variant)
// for ablation.n_seeds seeds under <out_dir> and evaluates on the test
// split. Runs whose directory already holds a result for the same config
// are reused. The deeper-codec variant reports its best depth.
AblationTable RunAblation(const RunConfig& run, const std::string& manifest,
                          const std::string& out_dir);

}  // namespace stepsep::train
