// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// 16-bit PCM mono RIFF/WAVE, little-endian. Samples map to [-1, 1) as
// int16 / 32768.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common/waveform.h"

namespace stepsep::data {

// expected_rate > 0 rejects files at any other rate.
Waveform ReadWav(const std::string& path, int expected_rate = 0);
void WriteWav(const std::string& path, const Waveform& w);

// Clamped, rounded quantization used by WriteWav.
int16_t QuantizeSample(double x);
inline float DequantizeSample(int16_t q) { return static_cast<float>(q) / 32768.0f; }

// Raw int16 variants for bit-exact corpus generation.
void WriteWavPcm16(const std::string& path, const std::vector<int16_t>& pcm, int sample_rate);

}  // namespace stepsep::data
