// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "common/error.h"

namespace stepsep {

// Mono signal, nominal amplitude range [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 8000;

  size_t size() const { return samples.size(); }

  void Validate() const {
    if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
    for (float v : samples) {
      if (!std::isfinite(v)) throw InvalidArgument("waveform contains non-finite samples");
    }
  }
};

}  // namespace stepsep
