// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "autograd/ops.h"

namespace stepsep::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  int checked = 0;
  // Worst entry.
  int leaf = -1;
  int64_t index = -1;
  double analytic = 0;
  double numeric = 0;
};

inline std::ostream& operator<<(std::ostream& os, const GradCheckResult& r) {
  return os << "max rel " << r.max_rel_error << " over " << r.checked << " entries; worst leaf "
            << r.leaf << "[" << r.index << "] analytic " << r.analytic << " numeric "
            << r.numeric;
}

// Central differences on up to max_per_leaf sampled entries of every leaf.
// rel = |a - n| / max(|a| + |n|, floor).
inline GradCheckResult CheckGradients(const std::function<ag::Var<double>()>& loss_fn,
                                      std::vector<ag::Var<double>> leaves, int max_per_leaf = 8,
                                      double h = 1e-6, double floor = 1e-5,
                                      uint64_t seed = 7) {
  for (auto& l : leaves) l.ZeroGrad();
  ag::Backward(loss_fn());
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const int64_t n = leaf.numel();
    std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    if (analytic.empty()) analytic.assign(n, 0.0);
    std::vector<int64_t> idx(n);
    for (int64_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<int64_t>(n, max_per_leaf));
    for (int64_t i : idx) {
      double& v = leaf.mutable_value()[i];
      const double saved = v;
      v = saved + h;
      const double up = loss_fn().item();
      v = saved - h;
      const double down = loss_fn().item();
      v = saved;
      const double numeric = (up - down) / (2 * h);
      const double rel =
          std::abs(analytic[i] - numeric) /
          std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.leaf = static_cast<int>(li);
        r.index = i;
        r.analytic = analytic[i];
        r.numeric = numeric;
      }
      ++r.checked;
    }
  }
  return r;
}

inline ag::Var<double> RandomLeaf(ag::Shape shape, std::mt19937_64& rng, double lo = -1,
                                  double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  ag::Buffer<double> v(ag::NumElements(shape));
  for (auto& e : v) e = d(rng);
  return ag::Var<double>::Parameter(std::move(shape), std::move(v));
}

// Weighted sum with fixed pseudo-random weights, so every output element
// contributes a distinct gradient.
inline ag::Var<double> Probe(const ag::Var<double>& y, uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> w(y.numel());
  for (auto& e : w) e = d(rng);
  return ag::Sum(ag::Mul(y, ag::Var<double>::Constant(y.shape(), std::move(w))));
}

}  // namespace stepsep::testing
