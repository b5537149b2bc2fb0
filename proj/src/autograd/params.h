// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "autograd/var.h"
#include "common/error.h"

namespace stepsep::ag {

// Ordered, named collection of learnable tensors. Creation order fixes both
// the random initialization stream and the checkpoint layout.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : rng_(seed) {}

  // Uniform in [-bound, bound].
  Var<T> Uniform(const std::string& name, Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Buffer<T> v(static_cast<size_t>(NumElements(shape)));
    for (auto& e : v) e = static_cast<T>(dist(rng_));
    return Add(name, std::move(shape), std::move(v));
  }

  Var<T> Fill(const std::string& name, Shape shape, T value) {
    Buffer<T> v(static_cast<size_t>(NumElements(shape)), value);
    return Add(name, std::move(shape), std::move(v));
  }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var<T>>>& entries() { return entries_; }

  Var<T> Find(const std::string& name) const {
    for (const auto& [n, v] : entries_) {
      if (n == name) return v;
    }
    throw InvalidArgument("no parameter named '" + name + "'");
  }

  int64_t Count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  int64_t CountWithPrefix(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& [name, v] : entries_) {
      if (name.rfind(prefix, 0) == 0) n += v.numel();
    }
    return n;
  }

  void ZeroGrad() {
    for (auto& e : entries_) e.second.ZeroGrad();
  }

 private:
  Var<T> Add(const std::string& name, Shape shape, Buffer<T> v) {
    for (const auto& e : entries_) {
      if (e.first == name) throw InvalidArgument("duplicate parameter '" + name + "'");
    }
    auto p = Var<T>::Parameter(std::move(shape), std::move(v));
    entries_.emplace_back(name, p);
    return p;
  }

  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Var<T>>> entries_;
};

}  // namespace stepsep::ag
