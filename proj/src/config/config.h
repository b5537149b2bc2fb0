// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Hyperparameter records and the run-config document. Defaults are the
// full-scale settings; configs/toy.json holds the CPU-sized preset.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace stepsep {

struct CodecConfig {
  int n_coarse_basis = 256;  // N^c
  int coarse_kernel = 16;    // K^c, samples
  int coarse_stride = 8;
  int n_fine_basis = 256;    // N^r
  int fine_kernel = 2;       // K^r, frames
  int fine_stride = 1;
  int n_groups = 4;          // P
  bool bias = true;
  // Conv layers per coarse encoder/decoder; > 1 only for the deeper-codec
  // ablation. Extra layers are pointwise N^c -> N^c with a rectifier.
  int depth = 1;

  int group_width() const { return n_coarse_basis / n_groups; }
  void Validate() const;
};

enum class BlockKind { kDprnn, kDptnet };

struct SeparatorConfig {
  BlockKind block_kind = BlockKind::kDprnn;
  int n_blocks = 6;      // R
  int chunk_len = 100;   // L
  int inner_dim = 64;
  int rnn_hidden = 128;  // per direction
  int attn_heads = 4;
  int n_sources = 2;     // D
  int in_dim = 256;      // set per phase from the codec

  void Validate() const;
};

enum class VariantKind {
  kBase,
  kBaseExpanded,
  kBaseDeeper,
  kBaseHighOrder,
  kIterative,
  kSrssn1D,
  kSrssn1DExpanded,
  kSrssnLrOnly,
  kSrssn,
};

struct VariantSpec {
  VariantKind kind = VariantKind::kSrssn;
  // Sparse "section.key" -> value overrides applied after the variant's
  // forced settings, e.g. {"codec.depth": 3}.
  std::map<std::string, nlohmann::json> overrides;
};

const std::vector<VariantKind>& AllVariants();
std::string VariantName(VariantKind kind);
VariantKind ParseVariant(const std::string& name);
std::string BlockKindName(BlockKind kind);
BlockKind ParseBlockKind(const std::string& name);

// True for variants that produce a second-phase estimate.
bool HasRefinePhase(VariantKind kind);
// True for variants trained with the coarse-phase loss.
bool UsesCoarseLoss(VariantKind kind);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double grad_clip = 5.0;  // components clamped to [-grad_clip, grad_clip]
  int epochs = 200;
  int batch_size = 4;
  uint64_t seed = 0;
  double segment_s = 2.0;
  int max_steps = 0;          // 0 = no cap
  int log_every = 50;
  int blocks_per_phase = 0;   // 0 = use separator.n_blocks as is

  void Validate() const;
};

struct CorpusConfig {
  int n_speakers_pool = 24;
  int n_train = 200;
  int n_valid = 40;
  int n_test = 40;
  int sample_rate = 8000;
  double duration_s = 1.0;
  double snr_lo = 0.0;
  double snr_hi = 5.0;
  bool noise = false;
  double noise_snr_lo = -6.0;
  double noise_snr_hi = 3.0;
  uint64_t seed = 0;

  void Validate(int min_samples = 1) const;
};

struct AblationConfig {
  std::vector<VariantKind> variants;
  std::vector<BlockKind> block_kinds;
  int n_seeds = 3;
  std::vector<int> deeper_depths{2, 3, 4};
};

// The whole structured document. Unknown keys are rejected.
struct RunConfig {
  CorpusConfig corpus;
  CodecConfig codec;
  SeparatorConfig separator;
  TrainConfig train;
  VariantSpec variant;
  AblationConfig ablation;

  void Validate() const;
};

// Fully resolved architecture for one model instance.
struct ModelConfig {
  VariantKind variant = VariantKind::kSrssn;
  CodecConfig codec;
  SeparatorConfig coarse_separator;
  SeparatorConfig refine_separator;  // meaningful only with a second phase
  int sample_rate = 8000;
};

// Applies the variant's forced settings, then user overrides, then the
// block budget (1-phase variants get twice the per-phase block count).
ModelConfig ResolveModelConfig(const RunConfig& run);

RunConfig ParseRunConfig(const nlohmann::json& doc);
nlohmann::json ToJson(const RunConfig& run);
nlohmann::json ToJson(const ModelConfig& model);
ModelConfig ModelConfigFromJson(const nlohmann::json& doc);

// Dotted-key override, e.g. ApplyOverride(doc, "train.seed", 3).
void ApplyOverride(nlohmann::json& doc, const std::string& dotted_key,
                   const nlohmann::json& value);

}  // namespace stepsep
