// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "autograd/params.h"

namespace stepsep::train {

// Clamps every gradient component to [-limit, limit]. Returns the number of
// components that were changed.
template <typename T>
int64_t ClampGradients(ag::ParamStore<T>& store, double limit) {
  int64_t changed = 0;
  const T hi = static_cast<T>(limit);
  for (auto& [name, p] : store.entries()) {
    if (!p.has_grad()) continue;
    for (T& g : p.mutable_grad()) {
      const T c = std::clamp(g, -hi, hi);
      changed += c != g;
      g = c;
    }
  }
  return changed;
}

// Adam with coupled L2 weight decay (decay is added to the gradient).
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double weight_decay = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(ag::ParamStore<T>& store, Options opt) : store_(store), opt_(opt) {
    for (const auto& e : store_.entries()) {
      m_.emplace_back(e.second.numel(), T(0));
      v_.emplace_back(e.second.numel(), T(0));
    }
  }

  void Step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double step = opt_.lr / bc1;
    const double sq2 = std::sqrt(bc2);
    auto& entries = store_.entries();
    for (size_t k = 0; k < entries.size(); ++k) {
      auto& p = entries[k].second;
      if (!p.has_grad()) continue;
      auto w = p.mutable_value();
      auto g = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]) + opt_.weight_decay * w[i];
        const double mi = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
        const double vi = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] -= static_cast<T>(step * mi / (std::sqrt(vi) / sq2 + opt_.eps));
      }
    }
  }

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  ag::ParamStore<T>& store_;
  Options opt_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace stepsep::train
