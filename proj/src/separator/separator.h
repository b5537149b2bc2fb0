// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Mask estimation network shared by both phases:
//
//   LayerNorm -> Linear(in_dim -> inner) -> chunking (L, hop L/2)
//   -> R dual-path blocks -> PReLU -> Linear(inner -> D * inner)
//   -> split D streams -> overlap-add -> Linear(inner -> in_dim) + ReLU
//
// A DPRNN path is  x + LN(Linear(BiLSTM(x))).
// A DPTNET path is y = LN(x + MHA(x)); out = LN(y + Linear(ReLU(BiLSTM(y)))).
// The intra path runs within each chunk, the inter path across chunks.

#pragma once

#include <string>
#include <vector>

#include "autograd/ops.h"
#include "autograd/params.h"
#include "config/config.h"

namespace stepsep::separator {

using ag::Var;

template <typename T>
struct PathParams {
  ag::LstmWeights<T> fwd;
  ag::LstmWeights<T> bwd;
  Var<T> proj_w, proj_b;  // [inner, 2H]: DPRNN projection / DPTNET feed-forward output
  Var<T> ln_g, ln_b;      // output normalization
  // DPTNET only.
  Var<T> qkv_w, qkv_b;    // [3 * inner, inner]
  Var<T> attn_w, attn_b;  // [inner, inner]
  Var<T> attn_ln_g, attn_ln_b;
};

template <typename T>
struct BlockParams {
  PathParams<T> intra;
  PathParams<T> inter;
};

template <typename T>
struct SeparatorParams {
  SeparatorConfig cfg;
  Var<T> norm_g, norm_b;  // [in_dim]
  Var<T> in_w, in_b;      // [inner, in_dim]
  std::vector<BlockParams<T>> blocks;
  Var<T> prelu;           // one shared slope
  Var<T> head_w, head_b;  // [D * inner, inner]
  Var<T> out_w, out_b;    // [in_dim, inner], shared across streams

  static SeparatorParams Create(ag::ParamStore<T>& store, const std::string& prefix,
                                const SeparatorConfig& cfg);
};

// chunks [N, S, L, inner] -> same shape.
template <typename T>
Var<T> DualPathBlock(const Var<T>& chunks, const BlockParams<T>& p, const SeparatorConfig& cfg);

// latent [N, T, in_dim] -> masks [D * N, T, in_dim], source-major
// (rows d * N .. d * N + N - 1 hold source d). All entries >= 0.
template <typename T>
Var<T> EstimateMasks(const Var<T>& latent, const SeparatorParams<T>& p);

}  // namespace stepsep::separator
