// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "common/error.h"
#include "config/config.h"

namespace stepsep {
namespace {

using nlohmann::json;

std::string ConfigErrorOf(const json& doc) {
  try {
    ResolveModelConfig(ParseRunConfig(doc));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig run = ParseRunConfig(json::object());
  EXPECT_EQ(run.codec.n_coarse_basis, 256);
  EXPECT_EQ(run.codec.coarse_kernel, 16);
  EXPECT_EQ(run.codec.coarse_stride, 8);
  EXPECT_EQ(run.codec.n_groups, 4);
  EXPECT_EQ(run.separator.n_blocks, 6);
  EXPECT_EQ(run.separator.chunk_len, 100);
  EXPECT_EQ(run.train.lr, 1e-3);
  EXPECT_EQ(run.train.grad_clip, 5.0);
  EXPECT_EQ(run.train.epochs, 200);
  EXPECT_EQ(run.variant.kind, VariantKind::kSrssn);
  EXPECT_NO_THROW(run.Validate());
}

TEST(Config, RoundTripsThroughJson) {
  json doc = {{"codec", {{"n_coarse_basis", 32}, {"n_groups", 2}}},
              {"train", {{"seed", 9}, {"lr", 0.01}}},
              {"variant", "SRSSN_1D"}};
  const RunConfig run = ParseRunConfig(doc);
  EXPECT_EQ(ToJson(ParseRunConfig(ToJson(run))), ToJson(run));
  EXPECT_EQ(run.train.seed, 9u);
  EXPECT_EQ(run.variant.kind, VariantKind::kSrssn1D);
}

TEST(Config, ShippedToyPresetParses) {
  std::ifstream in(STEPSEP_SOURCE_DIR "/configs/toy.json");
  ASSERT_TRUE(in.good());
  const RunConfig run = ParseRunConfig(json::parse(in));
  EXPECT_NO_THROW(ResolveModelConfig(run));
  EXPECT_EQ(run.train.epochs, 20);
}

TEST(Config, UnknownKeysAreRejectedByName) {
  const auto msg = ConfigErrorOf({{"train", {{"learning_rate", 0.1}}}});
  EXPECT_NE(msg.find("train.learning_rate"), std::string::npos) << msg;
  EXPECT_NE(ConfigErrorOf({{"trainer", json::object()}}).find("trainer"), std::string::npos);
}

TEST(Config, InvalidValuesNameTheKey) {
  EXPECT_NE(ConfigErrorOf({{"train", {{"lr", -1.0}}}}).find("train.lr"), std::string::npos);
  EXPECT_NE(ConfigErrorOf({{"train", {{"lr", "fast"}}}}).find("train.lr"), std::string::npos);
  EXPECT_NE(ConfigErrorOf({{"codec", {{"n_coarse_basis", 30}, {"n_groups", 4}}}})
                .find("codec.n_groups"),
            std::string::npos);
  EXPECT_NE(ConfigErrorOf({{"separator", {{"chunk_len", 7}}}}).find("separator.chunk_len"),
            std::string::npos);
  EXPECT_NE(ConfigErrorOf({{"corpus", {{"snr_range", {5.0, 0.0}}}}}).find("corpus.snr_range"),
            std::string::npos);
  EXPECT_NE(ConfigErrorOf({{"corpus", {{"snr_range", 3.0}}}}).find("corpus.snr_range"),
            std::string::npos);
  const auto msg = ConfigErrorOf({{"variant", "SRSSN_2D"}});
  EXPECT_NE(msg.find("SRSSN_2D"), std::string::npos) << msg;
  EXPECT_NE(msg.find("BASE_EXPANDED"), std::string::npos) << msg;
}

TEST(Config, DottedOverrides) {
  json doc = json::object();
  ApplyOverride(doc, "train.seed", 3);
  ApplyOverride(doc, "codec.n_groups", 2);
  ApplyOverride(doc, "variant", "BASE");
  const RunConfig run = ParseRunConfig(doc);
  EXPECT_EQ(run.train.seed, 3u);
  EXPECT_EQ(run.codec.n_groups, 2);
  EXPECT_EQ(run.variant.kind, VariantKind::kBase);

  json obj = {{"variant", {{"kind", "BASE_DEEPER"}, {"overrides", {{"codec.depth", 3}}}}}};
  ApplyOverride(obj, "variant", "SRSSN");
  EXPECT_EQ(obj["variant"]["kind"], "SRSSN");
  EXPECT_EQ(obj["variant"]["overrides"]["codec.depth"], 3);

  json bad = {{"train", {{"seed", 1}}}};
  EXPECT_THROW(ApplyOverride(bad, "train.seed.x", 1), ConfigError);
  EXPECT_THROW(ApplyOverride(bad, "train..seed", 1), ConfigError);
}

TEST(Config, VariantsForceTheirSettings) {
  RunConfig run;
  run.variant.kind = VariantKind::kBaseExpanded;
  EXPECT_EQ(ResolveModelConfig(run).codec.n_coarse_basis, 1024);
  EXPECT_EQ(ResolveModelConfig(run).coarse_separator.in_dim, 1024);
  run.variant.kind = VariantKind::kSrssn1D;
  EXPECT_EQ(ResolveModelConfig(run).codec.n_groups, 1);
  run.variant.kind = VariantKind::kSrssn1DExpanded;
  EXPECT_EQ(ResolveModelConfig(run).codec.n_fine_basis, 1024);
  EXPECT_EQ(ResolveModelConfig(run).refine_separator.in_dim, 1024);
  run.variant.kind = VariantKind::kBaseDeeper;
  EXPECT_EQ(ResolveModelConfig(run).codec.depth, 2);
  run.variant.overrides["codec.depth"] = 4;
  EXPECT_EQ(ResolveModelConfig(run).codec.depth, 4);

  run.variant.kind = VariantKind::kSrssn;
  EXPECT_THROW(ResolveModelConfig(run), ConfigError);
  run.variant.overrides = {{"train.lr", 1}};
  EXPECT_THROW(ResolveModelConfig(run), ConfigError);
}

TEST(Config, BlockBudgetIsSharedAcrossPhases) {
  RunConfig run;
  run.train.blocks_per_phase = 3;
  for (VariantKind kind : AllVariants()) {
    run.variant.kind = kind;
    const auto m = ResolveModelConfig(run);
    const int total = HasRefinePhase(kind)
                          ? m.coarse_separator.n_blocks + m.refine_separator.n_blocks
                          : m.coarse_separator.n_blocks;
    EXPECT_EQ(total, 6) << VariantName(kind);
  }
  run.train.blocks_per_phase = 0;
  run.variant.kind = VariantKind::kSrssn;
  EXPECT_EQ(ResolveModelConfig(run).coarse_separator.n_blocks, 6);
}

TEST(Config, ModelConfigRoundTrips) {
  RunConfig run;
  run.variant.kind = VariantKind::kIterative;
  const auto m = ResolveModelConfig(run);
  EXPECT_EQ(ToJson(ModelConfigFromJson(ToJson(m))), ToJson(m));
  EXPECT_THROW(ModelConfigFromJson(json::object()), ConfigError);
}

TEST(Config, NamesParseBack) {
  for (VariantKind kind : AllVariants()) EXPECT_EQ(ParseVariant(VariantName(kind)), kind);
  EXPECT_EQ(AllVariants().size(), 9u);
  EXPECT_EQ(ParseBlockKind("DPTNET"), BlockKind::kDptnet);
  EXPECT_THROW(ParseBlockKind("LSTM"), ConfigError);
}

}  // namespace
}  // namespace stepsep
