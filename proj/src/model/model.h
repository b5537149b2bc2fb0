// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Two-phase separation model and its ablation variants.
//
// Coarse phase: F = E^c(x), masks M_i = S^c(F), F_i = F * M_i, s^c_i = D^c(F_i).
// Refining phase, for every coarse stream i and group p:
//   F^r_i(p) = E^r(F_i(p)),  M_{i,j}(p) = S^r(F^r_i(p)),
//   G_j(p) = sum_i F^r_i(p) * M_{i,j}(p),
//   s^r_j = D^r_2(D^r_1(G_j)).
// The (stream x group) axis is folded into the batch so the refining
// separator runs once over all of them with shared weights.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "autograd/params.h"
#include "codec/latent_codec.h"
#include "config/config.h"
#include "separator/separator.h"

namespace stepsep::model {

using ag::Var;

template <typename T>
struct SeparationOutput {
  Var<T> coarse;   // [B, D, T]; the only estimate for one-phase variants
  Var<T> refined;  // [B, D, T]; undefined without a second phase
  // Intermediates for inspection.
  Var<T> mixture_latent;  // F^c [B, T', N^c]
  Var<T> coarse_latents;  // F_i [D*B, T', N^c], source-major
  Var<T> merged_latents;  // G_j [D*B*P, T'', N^r], source-major
};

template <typename T>
struct RefineResult {
  Var<T> fine_latents;  // F^r_i [S*B*P, T'', N^r]
  Var<T> masks;         // [D*S*B*P, T'', N^r]
  Var<T> merged;        // G_j [D*B*P, T'', N^r]
  Var<T> estimates;     // [B, D, T]
};

// fine [S*N, ...] and masks [D*S*N, ...] -> G [D*N, ...] with
// G_j = sum_i fine_i * masks_{j,i} (masks are source-major over j).
template <typename T>
Var<T> MergeComponents(const Var<T>& fine, const Var<T>& masks, int64_t n_streams,
                       int64_t n_sources);

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ag::ParamStore<T>& params() { return store_; }
  const ag::ParamStore<T>& params() const { return store_; }
  int n_sources() const { return cfg_.coarse_separator.n_sources; }
  bool has_refine() const { return HasRefinePhase(cfg_.variant); }
  uint64_t init_seed() const { return init_seed_; }

  // mixture [B, T] -> estimates at length T. With decode_coarse = false the
  // coarse decoder is skipped when a refined estimate exists (inference).
  SeparationOutput<T> Forward(const Var<T>& mixture, bool decode_coarse = true) const;

  // latents [S*B, T', N^c] for S streams -> refined estimates.
  RefineResult<T> Refine(const Var<T>& latents, int64_t n_streams, int64_t batch,
                         int64_t out_length) const;

  // Pure inference on one signal: D estimates, each of the input length.
  std::vector<std::vector<float>> Separate(std::span<const float> mixture,
                                           bool* used_refined = nullptr) const;

  // Encoder input channel count of the second pass (iterative variant).
  int second_pass_in_channels() const { return second_codec_ ? second_codec_->in_channels : 0; }

 private:
  struct CoarsePass {
    Var<T> latent;
    Var<T> latents;
    Var<T> estimates;
  };
  CoarsePass RunCoarse(const Var<T>& x3, const codec::CoarseCodec<T>& codec,
                       const separator::SeparatorParams<T>& sep, int64_t batch,
                       int64_t out_length, bool decode) const;

  ModelConfig cfg_;
  uint64_t init_seed_ = 0;
  ag::ParamStore<T> store_;
  codec::CoarseCodec<T> coarse_codec_;
  separator::SeparatorParams<T> coarse_sep_;
  std::optional<codec::FineCodec<T>> fine_codec_;
  std::optional<separator::SeparatorParams<T>> refine_sep_;
  std::optional<codec::CoarseCodec<T>> second_codec_;
};

}  // namespace stepsep::model
