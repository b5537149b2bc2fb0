// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "common/error.h"
#include "grad_check.h"
#include "model/model.h"
#include "objective/objective.h"

namespace stepsep::model {
namespace {

RunConfig ToyRun(VariantKind kind, BlockKind block = BlockKind::kDprnn) {
  RunConfig run;
  run.codec.n_coarse_basis = 16;
  run.codec.coarse_kernel = 16;
  run.codec.coarse_stride = 8;
  run.codec.n_fine_basis = 8;
  run.codec.fine_kernel = 2;
  run.codec.fine_stride = 1;
  run.codec.n_groups = 2;
  run.separator.block_kind = block;
  run.separator.n_blocks = 1;
  run.separator.chunk_len = 4;
  run.separator.inner_dim = 8;
  run.separator.rnn_hidden = 4;
  run.separator.attn_heads = 2;
  run.train.blocks_per_phase = 1;
  run.variant.kind = kind;
  return run;
}

template <typename T>
Var<T> RandomMixture(int64_t b, int64_t len, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 0.3);
  std::vector<T> v(b * len);
  for (auto& e : v) e = static_cast<T>(d(rng));
  return Var<T>::Constant({b, len}, std::move(v));
}

TEST(Phases, EveryVariantPreservesLength) {
  for (VariantKind kind : AllVariants()) {
    auto cfg = ResolveModelConfig(ToyRun(kind));
    if (kind == VariantKind::kBaseExpanded) cfg.codec.n_coarse_basis = 1024;
    Model<float> m(cfg, 1);
    ag::NoGradGuard guard;
    for (int64_t len : {16, 17, 63, 64, 129}) {
      auto out = m.Forward(RandomMixture<float>(2, len, len), true);
      ASSERT_TRUE(out.coarse.defined()) << VariantName(kind);
      EXPECT_EQ(out.coarse.shape(), (ag::Shape{2, 2, len})) << VariantName(kind);
      EXPECT_EQ(out.refined.defined(), HasRefinePhase(kind)) << VariantName(kind);
      if (out.refined.defined()) {
        EXPECT_EQ(out.refined.shape(), (ag::Shape{2, 2, len})) << VariantName(kind);
      }
      auto sep = m.Separate(RandomMixture<float>(1, len, 3).value());
      ASSERT_EQ(sep.size(), 2u);
      for (const auto& s : sep) EXPECT_EQ(static_cast<int64_t>(s.size()), len);
    }
  }
}

TEST(Phases, VariantStructure) {
  auto base = ResolveModelConfig(ToyRun(VariantKind::kBase));
  EXPECT_EQ(base.coarse_separator.n_blocks, 2);
  auto srssn = ResolveModelConfig(ToyRun(VariantKind::kSrssn));
  EXPECT_EQ(srssn.coarse_separator.n_blocks, 1);
  EXPECT_EQ(srssn.refine_separator.n_blocks, 1);
  EXPECT_EQ(srssn.refine_separator.in_dim, 8);
  EXPECT_EQ(ResolveModelConfig(ToyRun(VariantKind::kBaseExpanded)).codec.n_coarse_basis, 1024);
  auto one_d = ResolveModelConfig(ToyRun(VariantKind::kSrssn1DExpanded));
  EXPECT_EQ(one_d.codec.n_fine_basis, 1024);
  EXPECT_EQ(one_d.codec.n_groups, 1);
  EXPECT_EQ(ResolveModelConfig(ToyRun(VariantKind::kBaseDeeper)).codec.depth, 2);

  Model<float> iter(ResolveModelConfig(ToyRun(VariantKind::kIterative)), 1);
  EXPECT_EQ(iter.second_pass_in_channels(), 3);
  auto run3 = ToyRun(VariantKind::kIterative);
  run3.separator.n_sources = 3;
  EXPECT_EQ(Model<float>(ResolveModelConfig(run3), 1).second_pass_in_channels(), 4);

  EXPECT_THROW(ParseVariant("NOPE"), ConfigError);
}

TEST(Phases, SrssnAtDefaultWidth) {
  RunConfig run;
  run.separator.n_blocks = 1;
  run.separator.inner_dim = 16;
  run.separator.rnn_hidden = 8;
  run.variant.kind = VariantKind::kSrssn;
  Model<float> m(ResolveModelConfig(run), 1);
  ag::NoGradGuard guard;
  auto out = m.Forward(RandomMixture<float>(1, 16000, 1), true);
  EXPECT_EQ(out.coarse.shape(), (ag::Shape{1, 2, 16000}));
  EXPECT_EQ(out.refined.shape(), (ag::Shape{1, 2, 16000}));
  EXPECT_EQ(out.mixture_latent.shape(), (ag::Shape{1, 1999, 256}));
  EXPECT_EQ(out.coarse_latents.shape(), (ag::Shape{2, 1999, 256}));
  // D * P = 8 fine streams per utterance.
  EXPECT_EQ(out.merged_latents.shape(), (ag::Shape{8, 1998, 256}));
}

TEST(Phases, ZeroInputGivesZeroOutputs) {
  for (VariantKind kind : {VariantKind::kBase, VariantKind::kSrssn, VariantKind::kSrssn1D}) {
    auto run = ToyRun(kind);
    run.codec.bias = false;
    Model<double> m(ResolveModelConfig(run), 2);
    auto out = m.Forward(Var<double>::Zeros({1, 64}), true);
    for (const auto* v : {&out.mixture_latent, &out.coarse_latents, &out.coarse, &out.refined}) {
      if (!v->defined()) continue;
      for (double x : v->value()) ASSERT_EQ(x, 0.0) << VariantName(kind);
    }
  }
}

TEST(Merge, MatchesDoubleSumOracle) {
  const int64_t d = 3, streams = 3, bp = 2, frames = 5, nr = 4;
  const int64_t per = bp * frames * nr;
  std::mt19937_64 rng(1);
  auto fine = testing::RandomLeaf({streams * bp, frames, nr}, rng, 0, 1);
  auto masks = testing::RandomLeaf({d * streams * bp, frames, nr}, rng, 0, 1);
  auto g = MergeComponents(fine, masks, streams, d);
  ASSERT_EQ(g.shape(), (ag::Shape{d * bp, frames, nr}));
  for (int64_t j = 0; j < d; ++j) {
    for (int64_t k = 0; k < per; ++k) {
      double want = 0;
      for (int64_t i = 0; i < streams; ++i) {
        want += fine.value()[i * per + k] * masks.value()[(j * streams + i) * per + k];
      }
      ASSERT_NEAR(g.value()[j * per + k], want, 1e-12);
    }
  }
  // Total over components equals the double sum of masked components.
  double total = 0, double_sum = 0;
  for (double v : g.value()) total += v;
  for (int64_t j = 0; j < d; ++j) {
    for (int64_t i = 0; i < streams; ++i) {
      for (int64_t k = 0; k < per; ++k) {
        double_sum += fine.value()[i * per + k] * masks.value()[(j * streams + i) * per + k];
      }
    }
  }
  EXPECT_NEAR(total, double_sum, 1e-6);
}

TEST(Merge, Linearity) {
  std::mt19937_64 rng(2);
  auto fine = testing::RandomLeaf({4, 6, 3}, rng, 0, 1);
  auto masks = testing::RandomLeaf({8, 6, 3}, rng, 0, 1);
  auto g = MergeComponents(fine, masks, 2, 2);
  for (double alpha : {0.5, 2.0, -4.0}) {
    auto scaled = MergeComponents(ag::Scale(fine, alpha), masks, 2, 2);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ASSERT_EQ(scaled.value()[i], alpha * g.value()[i]);
    }
  }
}

TEST(Merge, IdentityRouting) {
  const int64_t d = 2, per = 2 * 5 * 4;
  std::mt19937_64 rng(3);
  auto fine = testing::RandomLeaf({d * 2, 5, 4}, rng, 0, 1);
  std::vector<double> m(d * d * per, 0.0);
  for (int64_t i = 0; i < d; ++i) {
    std::fill(m.begin() + (i * d + i) * per, m.begin() + (i * d + i + 1) * per, 1.0);
  }
  auto g = MergeComponents(fine, Var<double>::Constant({d * d * 2, 5, 4}, m), d, d);
  for (int64_t k = 0; k < g.numel(); ++k) ASSERT_EQ(g.value()[k], fine.value()[k]);
}

TEST(Merge, RejectsMismatchedMasks) {
  auto fine = Var<double>::Zeros({4, 5, 3});
  EXPECT_THROW(MergeComponents(fine, Var<double>::Zeros({4, 5, 3}), 2, 2), ShapeError);
}

TEST(Refine, SpeakerOrderDoesNotChangeComponents) {
  Model<double> m(ResolveModelConfig(ToyRun(VariantKind::kSrssn)), 4);
  auto out = m.Forward(RandomMixture<double>(1, 64, 5), true);
  const auto& f = out.coarse_latents;  // [D, T', N^c]
  const int64_t half = f.numel() / 2;
  std::vector<double> swapped(f.value().begin() + half, f.value().end());
  swapped.insert(swapped.end(), f.value().begin(), f.value().begin() + half);
  auto a = m.Refine(f, 2, 1, 64);
  auto b = m.Refine(Var<double>::Constant(f.shape(), swapped), 2, 1, 64);
  ASSERT_EQ(a.merged.shape(), b.merged.shape());
  for (int64_t i = 0; i < a.merged.numel(); ++i) {
    ASSERT_NEAR(a.merged.value()[i], b.merged.value()[i], 1e-12);
  }
  // Swapped fine latents arrive as swapped streams.
  const int64_t fh = a.fine_latents.numel() / 2;
  for (int64_t i = 0; i < fh; ++i) {
    ASSERT_EQ(a.fine_latents.value()[i], b.fine_latents.value()[i + fh]);
  }
}

class FullGraph : public ::testing::TestWithParam<BlockKind> {};

TEST_P(FullGraph, GradientMatchesFiniteDifferences) {
  Model<double> m(ResolveModelConfig(ToyRun(VariantKind::kSrssn, GetParam())), 5);
  auto x = RandomMixture<double>(1, 64, 6);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0, 0.3);
  std::vector<double> targets(2 * 64);
  for (auto& e : targets) e = d(rng);
  std::vector<Var<double>> leaves;
  for (auto& [n, v] : m.params().entries()) leaves.push_back(v);
  auto r = testing::CheckGradients(
      [&] {
        auto out = m.Forward(x, true);
        return objective::ComputeJointLoss<double>(out.coarse, out.refined, targets,
                                                   VariantKind::kSrssn)
            .total;
      },
      leaves, 2);
  EXPECT_GE(r.checked, 50);
  EXPECT_LT(r.max_rel_error, 1e-3) << r;
}

INSTANTIATE_TEST_SUITE_P(Phases, FullGraph,
                         ::testing::Values(BlockKind::kDprnn, BlockKind::kDptnet),
                         [](const auto& info) { return BlockKindName(info.param); });

}  // namespace
}  // namespace stepsep::model
