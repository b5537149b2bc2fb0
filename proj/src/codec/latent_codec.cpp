// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "codec/latent_codec.h"

#include <cmath>

namespace stepsep::codec {

namespace {

double Bound(int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// Inputs feeding one output sample of a transposed conv.
int64_t TransposedFanIn(int64_t c_in, int kernel, int stride) {
  return c_in * ((kernel + stride - 1) / stride);
}

template <typename T>
Var<T> MaybeBias(ag::ParamStore<T>& store, const std::string& name, int64_t n, int64_t fan_in,
                 bool bias) {
  if (!bias) return Var<T>();
  return store.Uniform(name, {n}, Bound(fan_in));
}

}  // namespace

int64_t AlignedLength(int64_t n, const CodecConfig& cfg) {
  const int64_t k = cfg.coarse_kernel;
  const int64_t s = cfg.coarse_stride;
  if (n <= k) return k;
  return k + ((n - k + s - 1) / s) * s;
}

int64_t FineAlignedLength(int64_t n, const CodecConfig& cfg) {
  int64_t len = AlignedLength(n, cfg);
  int64_t frames = (len - cfg.coarse_kernel) / cfg.coarse_stride + 1;
  while (frames < cfg.fine_kernel || (frames - cfg.fine_kernel) % cfg.fine_stride != 0) {
    ++frames;
    len += cfg.coarse_stride;
  }
  return len;
}

Aligned PadToAlignment(const Waveform& w, const CodecConfig& cfg) {
  if (w.samples.empty()) throw InvalidArgument("empty input");
  Aligned a;
  a.original_length = static_cast<int64_t>(w.samples.size());
  a.waveform = w;
  a.waveform.samples.resize(AlignedLength(a.original_length, cfg), 0.0f);
  return a;
}

int64_t CoarseFrames(int64_t aligned_length, const CodecConfig& cfg) {
  if (aligned_length < cfg.coarse_kernel ||
      (aligned_length - cfg.coarse_kernel) % cfg.coarse_stride != 0) {
    throw ShapeError("waveform length " + std::to_string(aligned_length) +
                     " is not aligned to the coarse encoder");
  }
  return (aligned_length - cfg.coarse_kernel) / cfg.coarse_stride + 1;
}

int64_t FineFrames(int64_t coarse_frames, const CodecConfig& cfg) {
  if (coarse_frames < cfg.fine_kernel) {
    throw ShapeError("coarse sequence too short for fine kernel");
  }
  if ((coarse_frames - cfg.fine_kernel) % cfg.fine_stride != 0) {
    throw ShapeError("coarse sequence length not aligned to the fine stride");
  }
  return (coarse_frames - cfg.fine_kernel) / cfg.fine_stride + 1;
}

int64_t CoarseSynthLength(int64_t coarse_frames, const CodecConfig& cfg) {
  return (coarse_frames - 1) * cfg.coarse_stride + cfg.coarse_kernel;
}

template <typename T>
CoarseCodec<T> CoarseCodec<T>::Create(ag::ParamStore<T>& store, const std::string& prefix,
                                      const CodecConfig& cfg, int in_channels,
                                      bool with_decoder) {
  CoarseCodec c;
  c.in_channels = in_channels;
  const int64_t n = cfg.n_coarse_basis;
  const int64_t enc_fan = static_cast<int64_t>(cfg.coarse_kernel) * in_channels;
  c.enc_w = store.Uniform(prefix + ".enc.w", {n, enc_fan}, Bound(enc_fan));
  c.enc_b = MaybeBias(store, prefix + ".enc.b", n, enc_fan, cfg.bias);
  for (int d = 1; d < cfg.depth; ++d) {
    const std::string tag = prefix + ".enc.extra" + std::to_string(d);
    c.enc_extra_w.push_back(store.Uniform(tag + ".w", {n, n}, Bound(n)));
    c.enc_extra_b.push_back(MaybeBias(store, tag + ".b", n, n, cfg.bias));
  }
  if (with_decoder) {
    for (int d = 1; d < cfg.depth; ++d) {
      const std::string tag = prefix + ".dec.extra" + std::to_string(d);
      c.dec_extra_w.push_back(store.Uniform(tag + ".w", {n, n}, Bound(n)));
      c.dec_extra_b.push_back(MaybeBias(store, tag + ".b", n, n, cfg.bias));
    }
    const int64_t fan = TransposedFanIn(n, cfg.coarse_kernel, cfg.coarse_stride);
    c.dec_w = store.Uniform(prefix + ".dec.w", {n, cfg.coarse_kernel}, Bound(fan));
    c.dec_b = MaybeBias(store, prefix + ".dec.b", 1, fan, cfg.bias);
  }
  return c;
}

template <typename T>
FineCodec<T> FineCodec<T>::Create(ag::ParamStore<T>& store, const std::string& prefix,
                                  const CodecConfig& cfg) {
  FineCodec c;
  const int64_t g = cfg.group_width();
  const int64_t nr = cfg.n_fine_basis;
  const int64_t enc_fan = g * cfg.fine_kernel;
  c.enc_w = store.Uniform(prefix + ".enc.w", {nr, enc_fan}, Bound(enc_fan));
  c.enc_b = MaybeBias(store, prefix + ".enc.b", nr, enc_fan, cfg.bias);
  const int64_t fan1 = TransposedFanIn(nr, cfg.fine_kernel, cfg.fine_stride);
  c.dec1_w = store.Uniform(prefix + ".dec1.w", {nr, g * cfg.fine_kernel}, Bound(fan1));
  c.dec1_b = MaybeBias(store, prefix + ".dec1.b", g, fan1, cfg.bias);
  const int64_t nc = cfg.n_coarse_basis;
  const int64_t fan2 = TransposedFanIn(nc, cfg.coarse_kernel, cfg.coarse_stride);
  c.dec2_w = store.Uniform(prefix + ".dec2.w", {nc, cfg.coarse_kernel}, Bound(fan2));
  c.dec2_b = MaybeBias(store, prefix + ".dec2.b", 1, fan2, cfg.bias);
  return c;
}

template <typename T>
Var<T> EncodeCoarse(const Var<T>& x, const CoarseCodec<T>& p, const CodecConfig& cfg) {
  if (x.rank() != 3 || x.dim(2) != p.in_channels) {
    throw ShapeError("EncodeCoarse: expected [M, L, " + std::to_string(p.in_channels) +
                     "], got " + ag::ShapeString(x.shape()));
  }
  CoarseFrames(x.dim(1), cfg);  // alignment check
  Var<T> f = ag::Relu(ag::Conv1d(x, p.enc_w, p.enc_b, cfg.coarse_kernel, cfg.coarse_stride));
  for (size_t i = 0; i < p.enc_extra_w.size(); ++i) {
    f = ag::Relu(ag::Linear(f, p.enc_extra_w[i], p.enc_extra_b[i]));
  }
  return f;
}

namespace {

template <typename T>
Var<T> SynthesizeWaveform(const Var<T>& f, const Var<T>& w, const Var<T>& b,
                          const CodecConfig& cfg, int64_t original_length) {
  if (f.rank() != 3 || f.dim(2) != cfg.n_coarse_basis) {
    throw ShapeError("decoder expects [M, T', " + std::to_string(cfg.n_coarse_basis) +
                     "], got " + ag::ShapeString(f.shape()));
  }
  const int64_t m = f.dim(0);
  const int64_t raw = CoarseSynthLength(f.dim(1), cfg);
  if (original_length < 1 || original_length > raw) {
    throw ShapeError("requested output length exceeds synthesized length");
  }
  Var<T> y = ag::ConvTranspose1d(f, w, b, cfg.coarse_kernel, cfg.coarse_stride);
  y = ag::Reshape(y, {m, raw});
  if (original_length != raw) y = ag::Slice(y, 1, 0, original_length);
  return y;
}

}  // namespace

template <typename T>
Var<T> DecodeCoarse(const Var<T>& f, const CoarseCodec<T>& p, const CodecConfig& cfg,
                    int64_t original_length) {
  if (!p.dec_w.defined()) throw InvalidArgument("coarse codec has no decoder");
  if (f.rank() != 3 || f.dim(2) != cfg.n_coarse_basis) {
    throw ShapeError("DecodeCoarse: wrong latent shape " + ag::ShapeString(f.shape()));
  }
  Var<T> h = f;
  for (size_t i = 0; i < p.dec_extra_w.size(); ++i) {
    h = ag::Relu(ag::Linear(h, p.dec_extra_w[i], p.dec_extra_b[i]));
  }
  return SynthesizeWaveform(h, p.dec_w, p.dec_b, cfg, original_length);
}

template <typename T>
Var<T> EncodeFine(const Var<T>& f, const FineCodec<T>& p, const CodecConfig& cfg) {
  if (f.rank() != 3 || f.dim(2) != cfg.n_coarse_basis) {
    throw ShapeError("EncodeFine: wrong latent shape " + ag::ShapeString(f.shape()));
  }
  const int64_t m = f.dim(0);
  const int64_t t1 = f.dim(1);
  FineFrames(t1, cfg);
  const int64_t P = cfg.n_groups;
  const int64_t g = cfg.group_width();
  // [M, T', P, g] -> [M, P, T', g] -> [M*P, T', g]
  Var<T> grouped = ag::Reshape(f, {m, t1, P, g});
  grouped = ag::Reshape(ag::Permute(grouped, {0, 2, 1, 3}), {m * P, t1, g});
  return ag::Relu(ag::Conv1d(grouped, p.enc_w, p.enc_b, cfg.fine_kernel, cfg.fine_stride));
}

template <typename T>
Var<T> DecodeFineStage1(const Var<T>& g, const FineCodec<T>& p, const CodecConfig& cfg) {
  const int64_t P = cfg.n_groups;
  if (g.rank() != 3 || g.dim(2) != cfg.n_fine_basis || g.dim(0) % P != 0) {
    throw ShapeError("DecodeFineStage1: wrong latent shape " + ag::ShapeString(g.shape()));
  }
  const int64_t m = g.dim(0) / P;
  const int64_t width = cfg.group_width();
  Var<T> y = ag::Relu(ag::ConvTranspose1d(g, p.dec1_w, p.dec1_b, cfg.fine_kernel,
                                          cfg.fine_stride));
  const int64_t t1 = y.dim(1);
  // [M*P, T', g] -> [M, P, T', g] -> [M, T', P, g] -> [M, T', N^c]
  y = ag::Reshape(y, {m, P, t1, width});
  return ag::Reshape(ag::Permute(y, {0, 2, 1, 3}), {m, t1, P * width});
}

template <typename T>
Var<T> DecodeFineStage2(const Var<T>& f, const FineCodec<T>& p, const CodecConfig& cfg,
                        int64_t original_length) {
  return SynthesizeWaveform(f, p.dec2_w, p.dec2_b, cfg, original_length);
}

#define STEPSEP_INSTANTIATE(T)                                                           \
  template struct CoarseCodec<T>;                                                        \
  template struct FineCodec<T>;                                                          \
  template Var<T> EncodeCoarse(const Var<T>&, const CoarseCodec<T>&, const CodecConfig&); \
  template Var<T> DecodeCoarse(const Var<T>&, const CoarseCodec<T>&, const CodecConfig&,  \
                               int64_t);                                                 \
  template Var<T> EncodeFine(const Var<T>&, const FineCodec<T>&, const CodecConfig&);     \
  template Var<T> DecodeFineStage1(const Var<T>&, const FineCodec<T>&, const CodecConfig&); \
  template Var<T> DecodeFineStage2(const Var<T>&, const FineCodec<T>&, const CodecConfig&, \
                                   int64_t);

STEPSEP_INSTANTIATE(float)
STEPSEP_INSTANTIATE(double)
#undef STEPSEP_INSTANTIATE

}  // namespace stepsep::codec
