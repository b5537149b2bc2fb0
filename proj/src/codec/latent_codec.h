// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Learned analysis/synthesis filter banks.
//
// Coarse pair: waveform -> conv (N^c filters, K^c taps) + ReLU -> latent,
// latent -> transposed conv -> waveform.
//
// Fine pair: the N^c coarse channels are split into P contiguous groups of
// N^c/P channels. One shared conv (N^c/P -> N^r, K^r frames) + ReLU encodes
// every group, so the fine latent of one stream is N^r x P x T''. Decoding
// runs a shared transposed conv + ReLU per group back to N^c/P channels,
// re-concatenates the groups, then a transposed conv to the waveform.
//
// Tensor layouts (channels-last):
//   waveform batch      [M, T]
//   coarse latent       [M, T', N^c]
//   fine latent         [M * P, T'', N^r]   (stream-major, group-minor)

#pragma once

#include <cstdint>
#include <vector>

#include "autograd/ops.h"
#include "autograd/params.h"
#include "common/waveform.h"
#include "config/config.h"

namespace stepsep::codec {

using ag::Var;

struct Aligned {
  Waveform waveform;
  int64_t original_length = 0;
};

// Smallest L >= max(n, K^c) with (L - K^c) divisible by the coarse stride.
int64_t AlignedLength(int64_t n, const CodecConfig& cfg);
// Smallest aligned length whose coarse frames also fit the fine encoder.
int64_t FineAlignedLength(int64_t n, const CodecConfig& cfg);
// Trailing zero-pad to AlignedLength. Throws "empty input" on empty signals.
Aligned PadToAlignment(const Waveform& w, const CodecConfig& cfg);

int64_t CoarseFrames(int64_t aligned_length, const CodecConfig& cfg);
int64_t FineFrames(int64_t coarse_frames, const CodecConfig& cfg);
int64_t CoarseSynthLength(int64_t coarse_frames, const CodecConfig& cfg);

template <typename T>
struct CoarseCodec {
  int in_channels = 1;
  Var<T> enc_w, enc_b;               // [N^c, K^c * Cin], [N^c]
  std::vector<Var<T>> enc_extra_w;   // depth-1 pointwise layers [N^c, N^c]
  std::vector<Var<T>> enc_extra_b;
  std::vector<Var<T>> dec_extra_w;
  std::vector<Var<T>> dec_extra_b;
  Var<T> dec_w, dec_b;               // [N^c, K^c], [1]

  static CoarseCodec Create(ag::ParamStore<T>& store, const std::string& prefix,
                            const CodecConfig& cfg, int in_channels = 1,
                            bool with_decoder = true);
};

template <typename T>
struct FineCodec {
  Var<T> enc_w, enc_b;    // [N^r, K^r * N^c/P], [N^r]  (one bank for all groups)
  Var<T> dec1_w, dec1_b;  // [N^r, K^r * N^c/P], [N^c/P]
  Var<T> dec2_w, dec2_b;  // [N^c, K^c], [1]

  static FineCodec Create(ag::ParamStore<T>& store, const std::string& prefix,
                          const CodecConfig& cfg);
};

// x [M, L, Cin] with L aligned -> [M, T', N^c], all entries >= 0.
template <typename T>
Var<T> EncodeCoarse(const Var<T>& x, const CoarseCodec<T>& p, const CodecConfig& cfg);

// f [M, T', N^c] -> [M, original_length]. Throws on a wrong channel count.
template <typename T>
Var<T> DecodeCoarse(const Var<T>& f, const CoarseCodec<T>& p, const CodecConfig& cfg,
                    int64_t original_length);

// f [M, T', N^c] -> [M * P, T'', N^r], all entries >= 0.
template <typename T>
Var<T> EncodeFine(const Var<T>& f, const FineCodec<T>& p, const CodecConfig& cfg);

// g [M * P, T'', N^r] -> [M, T', N^c] (rectified).
template <typename T>
Var<T> DecodeFineStage1(const Var<T>& g, const FineCodec<T>& p, const CodecConfig& cfg);

// f [M, T', N^c] -> [M, original_length].
template <typename T>
Var<T> DecodeFineStage2(const Var<T>& f, const FineCodec<T>& p, const CodecConfig& cfg,
                        int64_t original_length);

}  // namespace stepsep::codec
