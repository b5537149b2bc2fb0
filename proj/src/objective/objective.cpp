// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "objective/objective.h"

#include <algorithm>
#include <limits>
#include <numeric>

namespace stepsep::objective {

PitResult BestPermutation(const std::vector<std::vector<double>>& scores) {
  const int d = static_cast<int>(scores.size());
  if (d < 1 || d > kMaxPitSources) {
    throw InvalidArgument("PIT supports 1.." + std::to_string(kMaxPitSources) + " sources");
  }
  for (const auto& row : scores) {
    if (static_cast<int>(row.size()) != d) throw InvalidArgument("PIT score matrix not square");
  }
  std::vector<int> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  PitResult best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(d);
  do {
    // Summing in sorted order makes the score independent of target order.
    for (int i = 0; i < d; ++i) terms[i] = scores[i][perm[i]];
    std::sort(terms.begin(), terms.end());
    double s = 0;
    for (double t : terms) s += t;
    s /= d;
    ++best.n_candidates;
    if (s > best_score) {
      best_score = s;
      best.perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.loss = -best_score;
  return best;
}

PitResult PitLoss(const std::vector<std::vector<double>>& estimates,
                  const std::vector<std::vector<double>>& targets) {
  if (estimates.size() != targets.size()) {
    throw InvalidArgument("PIT: " + std::to_string(estimates.size()) + " estimates for " +
                          std::to_string(targets.size()) + " targets");
  }
  const size_t d = targets.size();
  std::vector<std::vector<double>> scores(d, std::vector<double>(d));
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < d; ++j) {
      scores[i][j] = SiSnr<double, double>(estimates[j], targets[i]);
    }
  }
  return BestPermutation(scores);
}

DeltaMetrics ComputeDeltaMetrics(const std::vector<std::vector<float>>& estimates,
                                 const std::vector<std::vector<float>>& targets,
                                 std::span<const float> mixture) {
  if (estimates.size() != targets.size()) {
    throw InvalidArgument("delta metrics: estimate/target count mismatch");
  }
  const size_t d = targets.size();
  std::vector<std::vector<double>> scores(d, std::vector<double>(d));
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < d; ++j) {
      scores[i][j] = SiSnr<float, float>(estimates[j], targets[i]);
    }
  }
  const PitResult pit = BestPermutation(scores);
  DeltaMetrics m;
  m.perm = pit.perm;
  for (size_t i = 0; i < d; ++i) {
    const auto& est = estimates[pit.perm[i]];
    const double si = scores[i][pit.perm[i]];
    const double sdr = SdrSimple<float, float>(est, targets[i]);
    m.si_snr.push_back(si);
    m.sdr.push_back(sdr);
    m.delta_si_snr += si - SiSnr<float, float>(mixture, targets[i]);
    m.delta_sdr += sdr - SdrSimple<float, float>(mixture, targets[i]);
  }
  m.delta_si_snr /= static_cast<double>(d);
  m.delta_sdr /= static_cast<double>(d);
  return m;
}

template <typename T>
PitVarResult<T> PitSiSnrLoss(const ag::Var<T>& est, std::span<const T> targets) {
  if (est.rank() != 3) throw ShapeError("PIT loss expects estimates [B, D, T]");
  const int64_t b = est.dim(0);
  const int64_t d = est.dim(1);
  const int64_t len = est.dim(2);
  if (static_cast<int64_t>(targets.size()) != b * d * len) {
    throw InvalidArgument("PIT loss: target size does not match estimates");
  }
  const T* ev = est.value().data();
  auto row = [len](const T* base, int64_t idx) {
    return std::span<const T>(base + idx * len, len);
  };

  PitVarResult<T> out;
  double total = 0;
  for (int64_t n = 0; n < b; ++n) {
    std::vector<std::vector<double>> scores(d, std::vector<double>(d));
    for (int64_t i = 0; i < d; ++i) {
      for (int64_t j = 0; j < d; ++j) {
        scores[i][j] = SiSnr<T, T>(row(ev, n * d + j), row(targets.data(), n * d + i));
      }
    }
    PitResult r = BestPermutation(scores);
    total += r.loss;
    out.perms.push_back(std::move(r.perm));
  }
  const T value = static_cast<T>(total / static_cast<double>(b));
  std::vector<T> tcopy(targets.begin(), targets.end());
  auto perms = out.perms;
  out.loss = ag::MakeResult<T>(
      {1}, {value}, {est},
      [b, d, len, tcopy = std::move(tcopy), perms = std::move(perms)](ag::Node<T>& node) {
        auto& px = node.parents[0];
        auto& g = px->EnsureGrad();
        const double upstream = node.grad[0];
        const double k = -upstream * 10.0 / std::log(10.0) / static_cast<double>(b * d);
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t i = 0; i < d; ++i) {
            const int64_t j = perms[n][i];
            const T* e = px->value.data() + (n * d + j) * len;
            const T* s = tcopy.data() + (n * d + i) * len;
            T* ge = g.data() + (n * d + j) * len;
            double dot = 0, se = 0;
            for (int64_t t = 0; t < len; ++t) {
              dot += static_cast<double>(e[t]) * s[t];
              se += static_cast<double>(s[t]) * s[t];
            }
            const double a = dot / se;
            double tn = 0, nn = 0;
            for (int64_t t = 0; t < len; ++t) {
              const double tt = a * s[t];
              const double nz = e[t] - tt;
              tn += tt * tt;
              nn += nz * nz;
            }
            const double ct = 2.0 * a / (tn + kEps);
            const double cn = 2.0 / (nn + kEps);
            for (int64_t t = 0; t < len; ++t) {
              const double tt = a * s[t];
              const double nz = e[t] - tt;
              ge[t] += static_cast<T>(k * (ct * s[t] - cn * nz));
            }
          }
        }
      });
  return out;
}

template <typename T>
JointLoss<T> ComputeJointLoss(const ag::Var<T>& coarse, const ag::Var<T>& refined,
                              std::span<const T> targets, VariantKind variant) {
  JointLoss<T> j;
  auto c = PitSiSnrLoss(coarse, targets);
  j.report.loss_coarse = c.loss.item();
  j.report.perm_coarse = c.perms;
  if (!refined.defined()) {
    j.total = c.loss;
    j.report.loss_total = j.report.loss_coarse;
    return j;
  }
  auto r = PitSiSnrLoss(refined, targets);
  j.report.has_refine = true;
  j.report.loss_refine = r.loss.item();
  j.report.perm_refine = r.perms;
  if (UsesCoarseLoss(variant)) {
    j.total = ag::Add(c.loss, r.loss);
    j.report.loss_total = j.total.item();
  } else {
    j.total = r.loss;
    j.report.loss_total = j.report.loss_refine;
  }
  return j;
}

template PitVarResult<float> PitSiSnrLoss(const ag::Var<float>&, std::span<const float>);
template PitVarResult<double> PitSiSnrLoss(const ag::Var<double>&, std::span<const double>);
template JointLoss<float> ComputeJointLoss(const ag::Var<float>&, const ag::Var<float>&,
                                           std::span<const float>, VariantKind);
template JointLoss<double> ComputeJointLoss(const ag::Var<double>&, const ag::Var<double>&,
                                            std::span<const double>, VariantKind);

}  // namespace stepsep::objective
