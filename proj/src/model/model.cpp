// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "model/model.h"

#include "common/error.h"

namespace stepsep::model {

namespace {

template <typename T>
Var<T> Repeat(const Var<T>& x, int64_t times) {
  return ag::Concat<T>(std::vector<Var<T>>(times, x), 0);
}

// [D*B, T] source-major -> [B, D, T]
template <typename T>
Var<T> ToBatchMajor(const Var<T>& y, int64_t d, int64_t b) {
  const int64_t len = y.dim(1);
  return ag::Permute(ag::Reshape(y, {d, b, len}), {1, 0, 2});
}

}  // namespace

template <typename T>
Var<T> MergeComponents(const Var<T>& fine, const Var<T>& masks, int64_t n_streams,
                       int64_t n_sources) {
  if (masks.numel() != fine.numel() * n_sources || fine.dim(0) % n_streams != 0) {
    throw ShapeError("MergeComponents: masks " + ag::ShapeString(masks.shape()) +
                     " do not match latents " + ag::ShapeString(fine.shape()));
  }
  const int64_t per_stream = fine.numel() / n_streams;
  Var<T> parts = ag::Mul(Repeat(fine, n_sources), masks);
  Var<T> merged = ag::SumAxis(ag::Reshape(parts, {n_sources, n_streams, per_stream}), 1);
  ag::Shape shape = fine.shape();
  shape[0] = n_sources * (fine.dim(0) / n_streams);
  return ag::Reshape(merged, shape);
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg), init_seed_(seed), store_(seed) {
  cfg_.codec.Validate();
  const VariantKind v = cfg_.variant;
  const bool high_order = v == VariantKind::kBaseHighOrder;
  coarse_codec_ = codec::CoarseCodec<T>::Create(store_, "coarse.codec", cfg_.codec, 1,
                                                 /*with_decoder=*/!high_order);
  coarse_sep_ = separator::SeparatorParams<T>::Create(store_, "coarse.sep", cfg_.coarse_separator);
  if (high_order) {
    fine_codec_ = codec::FineCodec<T>::Create(store_, "fine.codec", cfg_.codec);
  } else if (v == VariantKind::kIterative) {
    second_codec_ = codec::CoarseCodec<T>::Create(store_, "second.codec", cfg_.codec,
                                                   1 + n_sources());
    refine_sep_ =
        separator::SeparatorParams<T>::Create(store_, "second.sep", cfg_.refine_separator);
  } else if (has_refine()) {
    fine_codec_ = codec::FineCodec<T>::Create(store_, "fine.codec", cfg_.codec);
    refine_sep_ = separator::SeparatorParams<T>::Create(store_, "fine.sep", cfg_.refine_separator);
  }
  if (cfg_.refine_separator.n_sources != cfg_.coarse_separator.n_sources) {
    throw ConfigError("both phases must separate the same number of sources");
  }
}

template <typename T>
typename Model<T>::CoarsePass Model<T>::RunCoarse(const Var<T>& x3,
                                                  const codec::CoarseCodec<T>& codec,
                                                  const separator::SeparatorParams<T>& sep,
                                                  int64_t batch, int64_t out_length,
                                                  bool decode) const {
  const int64_t d = n_sources();
  CoarsePass r;
  r.latent = codec::EncodeCoarse(x3, codec, cfg_.codec);
  Var<T> masks = separator::EstimateMasks(r.latent, sep);
  r.latents = ag::Mul(Repeat(r.latent, d), masks);
  if (decode) {
    r.estimates = ToBatchMajor(codec::DecodeCoarse(r.latents, codec, cfg_.codec, out_length), d,
                               batch);
  }
  return r;
}

template <typename T>
RefineResult<T> Model<T>::Refine(const Var<T>& latents, int64_t n_streams, int64_t batch,
                                 int64_t out_length) const {
  if (!fine_codec_) throw InvalidArgument("variant has no fine codec");
  const separator::SeparatorParams<T>& sep =
      cfg_.variant == VariantKind::kBaseHighOrder ? coarse_sep_ : *refine_sep_;
  const int64_t d = n_sources();
  RefineResult<T> r;
  r.fine_latents = codec::EncodeFine(latents, *fine_codec_, cfg_.codec);
  r.masks = separator::EstimateMasks(r.fine_latents, sep);
  r.merged = MergeComponents(r.fine_latents, r.masks, n_streams, d);
  Var<T> coarse_domain = codec::DecodeFineStage1(r.merged, *fine_codec_, cfg_.codec);
  Var<T> wave = codec::DecodeFineStage2(coarse_domain, *fine_codec_, cfg_.codec, out_length);
  r.estimates = ToBatchMajor(wave, d, batch);
  return r;
}

template <typename T>
SeparationOutput<T> Model<T>::Forward(const Var<T>& mixture, bool decode_coarse) const {
  if (mixture.rank() != 2) throw ShapeError("Forward expects mixtures [B, T]");
  const int64_t b = mixture.dim(0);
  const int64_t len = mixture.dim(1);
  if (len < 1) throw InvalidArgument("empty input");
  const int64_t aligned = fine_codec_ ? codec::FineAlignedLength(len, cfg_.codec)
                                      : codec::AlignedLength(len, cfg_.codec);
  Var<T> x = aligned == len ? mixture : ag::PadAxis(mixture, 1, 0, aligned - len);
  Var<T> x3 = ag::Reshape(x, {b, aligned, 1});
  const int64_t d = n_sources();

  SeparationOutput<T> out;
  switch (cfg_.variant) {
    case VariantKind::kBase:
    case VariantKind::kBaseExpanded:
    case VariantKind::kBaseDeeper: {
      auto c = RunCoarse(x3, coarse_codec_, coarse_sep_, b, len, true);
      out.mixture_latent = c.latent;
      out.coarse_latents = c.latents;
      out.coarse = c.estimates;
      break;
    }
    case VariantKind::kBaseHighOrder: {
      Var<T> f = codec::EncodeCoarse(x3, coarse_codec_, cfg_.codec);
      auto r = Refine(f, 1, b, len);
      out.mixture_latent = f;
      out.merged_latents = r.merged;
      out.coarse = r.estimates;
      break;
    }
    case VariantKind::kIterative: {
      // First pass decodes at the aligned length so the second encoder sees
      // a window-aligned multichannel input.
      auto c = RunCoarse(x3, coarse_codec_, coarse_sep_, b, aligned, true);
      out.mixture_latent = c.latent;
      out.coarse_latents = c.latents;
      Var<T> first = c.estimates;  // [B, D, aligned]
      Var<T> stacked = ag::Concat<T>({x3, ag::Permute(first, {0, 2, 1})}, 2);
      auto second = RunCoarse(stacked, *second_codec_, *refine_sep_, b, len, true);
      out.coarse = aligned == len ? first : ag::Slice(first, 2, 0, len);
      out.refined = second.estimates;
      break;
    }
    case VariantKind::kSrssn1D:
    case VariantKind::kSrssn1DExpanded:
    case VariantKind::kSrssnLrOnly:
    case VariantKind::kSrssn: {
      auto c = RunCoarse(x3, coarse_codec_, coarse_sep_, b, len, decode_coarse);
      out.mixture_latent = c.latent;
      out.coarse_latents = c.latents;
      out.coarse = c.estimates;
      auto r = Refine(c.latents, d, b, len);
      out.merged_latents = r.merged;
      out.refined = r.estimates;
      break;
    }
  }
  return out;
}

template <typename T>
std::vector<std::vector<float>> Model<T>::Separate(std::span<const float> mixture,
                                                   bool* used_refined) const {
  ag::NoGradGuard guard;
  std::vector<T> v(mixture.begin(), mixture.end());
  const int64_t len = static_cast<int64_t>(v.size());
  auto x = Var<T>::Constant({1, len}, std::move(v));
  auto out = Forward(x, /*decode_coarse=*/false);
  const Var<T>& est = out.refined.defined() ? out.refined : out.coarse;
  if (used_refined) *used_refined = out.refined.defined();
  std::vector<std::vector<float>> result(n_sources());
  for (int j = 0; j < n_sources(); ++j) {
    auto span = est.value().subspan(j * len, len);
    result[j].assign(span.begin(), span.end());
  }
  return result;
}

template class Model<float>;
template class Model<double>;
template Var<float> MergeComponents(const Var<float>&, const Var<float>&, int64_t, int64_t);
template Var<double> MergeComponents(const Var<double>&, const Var<double>&, int64_t, int64_t);

}  // namespace stepsep::model
