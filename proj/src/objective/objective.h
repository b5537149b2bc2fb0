// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Separation metrics and the permutation-invariant training objective.
//
//   s_target = (<est, ref> / |ref|^2) ref,   s_noise = est - s_target
//   SI-SNR   = 10 log10((|s_target|^2 + eps) / (|s_noise|^2 + eps))
//   SDR      = 10 log10(|ref|^2 / (|est - ref|^2 + eps))
//
// Permutations are stored as perm[i] = index of the estimate assigned to
// target i. Ties go to the lexicographically smallest permutation.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "autograd/ops.h"
#include "autograd/var.h"
#include "common/error.h"
#include "config/config.h"

namespace stepsep::objective {

inline constexpr double kEps = 1e-8;
inline constexpr int kMaxPitSources = 4;

namespace detail {

template <typename A, typename B>
void CheckPair(std::span<const A> est, std::span<const B> ref) {
  if (est.size() != ref.size()) {
    throw InvalidArgument("length mismatch: estimate " + std::to_string(est.size()) +
                          " vs reference " + std::to_string(ref.size()));
  }
  if (ref.empty()) throw InvalidArgument("empty signals");
  bool any = false;
  for (const auto& v : ref) any = any || v != B(0);
  if (!any) throw InvalidArgument("undefined reference: all-zero signal");
}

}  // namespace detail

template <typename A, typename B>
double SiSnr(std::span<const A> est, std::span<const B> ref, double eps = kEps) {
  detail::CheckPair(est, ref);
  double dot = 0, ref_energy = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    dot += static_cast<double>(est[i]) * ref[i];
    ref_energy += static_cast<double>(ref[i]) * ref[i];
  }
  const double a = dot / ref_energy;
  double target = 0, noise = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double t = a * ref[i];
    const double n = static_cast<double>(est[i]) - t;
    target += t * t;
    noise += n * n;
  }
  return 10.0 * std::log10((target + eps) / (noise + eps));
}

template <typename A, typename B>
double SdrSimple(std::span<const A> est, std::span<const B> ref, double eps = kEps) {
  detail::CheckPair(est, ref);
  double ref_energy = 0, err = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double r = ref[i];
    const double d = static_cast<double>(est[i]) - r;
    ref_energy += r * r;
    err += d * d;
  }
  return 10.0 * std::log10(ref_energy / (err + eps));
}

struct PitResult {
  double loss = 0;        // -max mean SI-SNR, in -dB
  std::vector<int> perm;  // perm[i] = estimate for target i
  int n_candidates = 0;   // permutations evaluated
};

// Brute force over all D! assignments given the D x D score matrix
// scores[target][estimate] (higher is better).
PitResult BestPermutation(const std::vector<std::vector<double>>& scores);

PitResult PitLoss(const std::vector<std::vector<double>>& estimates,
                  const std::vector<std::vector<double>>& targets);

struct LossReport {
  double loss_coarse = 0;
  double loss_refine = 0;
  double loss_total = 0;
  bool has_refine = false;
  // Batch-mean losses; permutations for each batch item.
  std::vector<std::vector<int>> perm_coarse;
  std::vector<std::vector<int>> perm_refine;
};

struct DeltaMetrics {
  double delta_si_snr = 0;  // mean over sources after PIT alignment
  double delta_sdr = 0;
  std::vector<double> si_snr;  // per target, aligned estimate
  std::vector<double> sdr;
  std::vector<int> perm;
};

DeltaMetrics ComputeDeltaMetrics(const std::vector<std::vector<float>>& estimates,
                                 const std::vector<std::vector<float>>& targets,
                                 std::span<const float> mixture);

// Differentiable uPIT SI-SNR loss. est [B, D, T]; targets hold B*D*T values
// in the same layout. Returns the batch mean of per-item PIT losses.
template <typename T>
struct PitVarResult {
  ag::Var<T> loss;
  std::vector<std::vector<int>> perms;
};

template <typename T>
PitVarResult<T> PitSiSnrLoss(const ag::Var<T>& est, std::span<const T> targets);

template <typename T>
struct JointLoss {
  ag::Var<T> total;
  LossReport report;
};

// coarse [B, D, T] always present; refined may be undefined for one-phase
// variants. Total = L^c + L^r, or L^r alone when the variant drops L^c, or
// L^c alone without a second phase.
template <typename T>
JointLoss<T> ComputeJointLoss(const ag::Var<T>& coarse, const ag::Var<T>& refined,
                              std::span<const T> targets, VariantKind variant);

}  // namespace stepsep::objective
