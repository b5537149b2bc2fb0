// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable tensor ops. Layouts are row-major; sequence ops use
// channels-last [batch, frames, channels] so that per-frame linear maps
// become a single GEMM.

#pragma once

#include <cstdint>
#include <vector>

#include "autograd/var.h"

namespace stepsep::ag {

template <typename T> Var<T> Add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Scale(const Var<T>& a, T s);
template <typename T> Var<T> Relu(const Var<T>& x);
// Single learnable slope shared across all elements; slope has one element.
template <typename T> Var<T> PRelu(const Var<T>& x, const Var<T>& slope);
// Scalar sum of all elements.
template <typename T> Var<T> Sum(const Var<T>& x);

// x [..., in], w [out, in], b [out] (may be undefined) -> [..., out].
template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// Normalizes over the last axis, then applies per-channel gain and shift.
template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 T eps = T(1e-5));

template <typename T> Var<T> Reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> Permute(const Var<T>& x, const std::vector<int>& perm);
template <typename T> Var<T> Slice(const Var<T>& x, int axis, int64_t begin, int64_t end);
template <typename T> Var<T> Concat(const std::vector<Var<T>>& xs, int axis);
// Sums out one axis (the axis is removed from the shape).
template <typename T> Var<T> SumAxis(const Var<T>& x, int axis);
template <typename T> Var<T> PadAxis(const Var<T>& x, int axis, int64_t before, int64_t after);

// x [N, T, Cin], w [Cout, K*Cin] (row layout k-major, channel-minor),
// b [Cout] -> [N, (T-K)/stride+1, Cout].
template <typename T>
Var<T> Conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int kernel, int stride);

// x [N, T', Cin], w [Cin, K*Cout], b [Cout] -> [N, (T'-1)*stride+K, Cout].
template <typename T>
Var<T> ConvTranspose1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int kernel,
                       int stride);

struct ChunkLayout {
  int64_t frames = 0;
  int64_t padded = 0;
  int64_t n_chunks = 0;
  int64_t pad_frames = 0;
  int chunk_len = 0;
  int hop() const { return chunk_len / 2; }
};
// Smallest trailing zero-padding giving an integral number of half-overlapped
// chunks. Throws for odd or non-positive chunk lengths and empty input.
ChunkLayout ComputeChunkLayout(int64_t frames, int chunk_len);

// x [N, T, C] -> [N, n_chunks, L, C], hop L/2.
template <typename T> Var<T> SegmentChunks(const Var<T>& x, int chunk_len);
// x [N, n_chunks, L, C] -> [N, frames, C]; overlapping frames are averaged
// and trailing padding is dropped.
template <typename T> Var<T> OverlapAdd(const Var<T>& x, int64_t frames);

template <typename T>
struct LstmWeights {
  Var<T> w_ih;  // [4H, Cin], gate order i, f, g, o
  Var<T> w_hh;  // [4H, H]
  Var<T> bias;  // [4H]
};

// Unidirectional LSTM over axis 1. x [N, S, Cin] -> [N, S, H]. With
// reverse = true the sequence is consumed from the last step to the first.
template <typename T>
Var<T> Lstm(const Var<T>& x, const LstmWeights<T>& w, bool reverse);

// Scaled dot-product attention on packed projections.
// qkv [N, S, 3C] holding q | k | v -> [N, S, C]; C must divide by heads.
template <typename T>
Var<T> MultiHeadAttention(const Var<T>& qkv, int heads);

}  // namespace stepsep::ag
