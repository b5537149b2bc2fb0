// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "separator/separator.h"

#include <cmath>

#include "common/error.h"

namespace stepsep::separator {

namespace {

double Bound(int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <typename T>
ag::LstmWeights<T> MakeLstm(ag::ParamStore<T>& store, const std::string& prefix, int64_t in,
                            int64_t hidden) {
  const double b = Bound(hidden);
  ag::LstmWeights<T> w;
  w.w_ih = store.Uniform(prefix + ".w_ih", {4 * hidden, in}, b);
  w.w_hh = store.Uniform(prefix + ".w_hh", {4 * hidden, hidden}, b);
  w.bias = store.Uniform(prefix + ".b", {4 * hidden}, b);
  return w;
}

template <typename T>
PathParams<T> MakePath(ag::ParamStore<T>& store, const std::string& prefix,
                       const SeparatorConfig& cfg) {
  const int64_t c = cfg.inner_dim;
  const int64_t h = cfg.rnn_hidden;
  PathParams<T> p;
  if (cfg.block_kind == BlockKind::kDptnet) {
    p.qkv_w = store.Uniform(prefix + ".attn.qkv.w", {3 * c, c}, Bound(c));
    p.qkv_b = store.Uniform(prefix + ".attn.qkv.b", {3 * c}, Bound(c));
    p.attn_w = store.Uniform(prefix + ".attn.out.w", {c, c}, Bound(c));
    p.attn_b = store.Uniform(prefix + ".attn.out.b", {c}, Bound(c));
    p.attn_ln_g = store.Fill(prefix + ".attn.ln.g", {c}, T(1));
    p.attn_ln_b = store.Fill(prefix + ".attn.ln.b", {c}, T(0));
  }
  p.fwd = MakeLstm(store, prefix + ".rnn.fwd", c, h);
  p.bwd = MakeLstm(store, prefix + ".rnn.bwd", c, h);
  p.proj_w = store.Uniform(prefix + ".proj.w", {c, 2 * h}, Bound(2 * h));
  p.proj_b = store.Uniform(prefix + ".proj.b", {c}, Bound(2 * h));
  p.ln_g = store.Fill(prefix + ".ln.g", {c}, T(1));
  p.ln_b = store.Fill(prefix + ".ln.b", {c}, T(0));
  return p;
}

template <typename T>
Var<T> BiLstm(const Var<T>& x, const PathParams<T>& p) {
  return ag::Concat<T>({ag::Lstm(x, p.fwd, false), ag::Lstm(x, p.bwd, true)}, 2);
}

// x [B, S, C] -> [B, S, C]
template <typename T>
Var<T> RunPath(const Var<T>& x, const PathParams<T>& p, const SeparatorConfig& cfg) {
  if (cfg.block_kind == BlockKind::kDprnn) {
    Var<T> y = ag::Linear(BiLstm(x, p), p.proj_w, p.proj_b);
    return ag::Add(x, ag::LayerNorm(y, p.ln_g, p.ln_b));
  }
  Var<T> attn = ag::MultiHeadAttention(ag::Linear(x, p.qkv_w, p.qkv_b), cfg.attn_heads);
  attn = ag::Linear(attn, p.attn_w, p.attn_b);
  Var<T> y = ag::LayerNorm(ag::Add(x, attn), p.attn_ln_g, p.attn_ln_b);
  Var<T> ff = ag::Linear(ag::Relu(BiLstm(y, p)), p.proj_w, p.proj_b);
  return ag::LayerNorm(ag::Add(y, ff), p.ln_g, p.ln_b);
}

}  // namespace

template <typename T>
SeparatorParams<T> SeparatorParams<T>::Create(ag::ParamStore<T>& store, const std::string& prefix,
                                              const SeparatorConfig& cfg) {
  cfg.Validate();
  SeparatorParams p;
  p.cfg = cfg;
  const int64_t in = cfg.in_dim;
  const int64_t c = cfg.inner_dim;
  const int64_t d = cfg.n_sources;
  p.norm_g = store.Fill(prefix + ".norm.g", {in}, T(1));
  p.norm_b = store.Fill(prefix + ".norm.b", {in}, T(0));
  p.in_w = store.Uniform(prefix + ".in.w", {c, in}, Bound(in));
  p.in_b = store.Uniform(prefix + ".in.b", {c}, Bound(in));
  for (int r = 0; r < cfg.n_blocks; ++r) {
    const std::string tag = prefix + ".block" + std::to_string(r);
    BlockParams<T> b;
    b.intra = MakePath(store, tag + ".intra", cfg);
    b.inter = MakePath(store, tag + ".inter", cfg);
    p.blocks.push_back(std::move(b));
  }
  p.prelu = store.Fill(prefix + ".prelu", {1}, T(0.25));
  p.head_w = store.Uniform(prefix + ".head.w", {d * c, c}, Bound(c));
  p.head_b = store.Uniform(prefix + ".head.b", {d * c}, Bound(c));
  p.out_w = store.Uniform(prefix + ".out.w", {in, c}, Bound(c));
  p.out_b = store.Uniform(prefix + ".out.b", {in}, Bound(c));
  return p;
}

template <typename T>
Var<T> DualPathBlock(const Var<T>& chunks, const BlockParams<T>& p, const SeparatorConfig& cfg) {
  if (chunks.rank() != 4 || chunks.dim(3) != cfg.inner_dim) {
    throw ShapeError("DualPathBlock: expected [N, S, L, " + std::to_string(cfg.inner_dim) +
                     "], got " + ag::ShapeString(chunks.shape()));
  }
  const int64_t n = chunks.dim(0);
  const int64_t s = chunks.dim(1);
  const int64_t l = chunks.dim(2);
  const int64_t c = chunks.dim(3);

  Var<T> x = ag::Reshape(chunks, {n * s, l, c});
  x = ag::Reshape(RunPath(x, p.intra, cfg), {n, s, l, c});

  Var<T> y = ag::Reshape(ag::Permute(x, {0, 2, 1, 3}), {n * l, s, c});
  y = ag::Reshape(RunPath(y, p.inter, cfg), {n, l, s, c});
  return ag::Permute(y, {0, 2, 1, 3});
}

template <typename T>
Var<T> EstimateMasks(const Var<T>& latent, const SeparatorParams<T>& p) {
  const auto& cfg = p.cfg;
  if (latent.rank() != 3 || latent.dim(2) != cfg.in_dim) {
    throw ShapeError("EstimateMasks: expected [N, T, " + std::to_string(cfg.in_dim) +
                     "], got " + ag::ShapeString(latent.shape()));
  }
  const int64_t n = latent.dim(0);
  const int64_t frames = latent.dim(1);
  if (frames < 1) throw ShapeError("EstimateMasks: no frames");
  const int64_t c = cfg.inner_dim;
  const int64_t d = cfg.n_sources;

  Var<T> x = ag::LayerNorm(latent, p.norm_g, p.norm_b);
  x = ag::Linear(x, p.in_w, p.in_b);
  x = ag::SegmentChunks(x, cfg.chunk_len);
  for (const auto& block : p.blocks) x = DualPathBlock(x, block, cfg);
  x = ag::Linear(ag::PRelu(x, p.prelu), p.head_w, p.head_b);

  const int64_t s = x.dim(1);
  const int64_t l = x.dim(2);
  x = ag::Reshape(x, {n, s, l, d, c});
  x = ag::Reshape(ag::Permute(x, {3, 0, 1, 2, 4}), {d * n, s, l, c});
  x = ag::OverlapAdd(x, frames);
  return ag::Relu(ag::Linear(x, p.out_w, p.out_b));
}

#define STEPSEP_INSTANTIATE(T)                                                          \
  template struct SeparatorParams<T>;                                                   \
  template Var<T> DualPathBlock(const Var<T>&, const BlockParams<T>&,                   \
                                const SeparatorConfig&);                                \
  template Var<T> EstimateMasks(const Var<T>&, const SeparatorParams<T>&);

STEPSEP_INSTANTIATE(float)
STEPSEP_INSTANTIATE(double)
#undef STEPSEP_INSTANTIATE

}  // namespace stepsep::separator
