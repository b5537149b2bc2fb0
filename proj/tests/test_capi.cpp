// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "stepsep/stepsep.h"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "test_util.h"

namespace {

using nlohmann::json;
using stepsep::testing::TempDir;

const char* kTinyConfig = R"({
  "corpus": {"n_train": 4, "n_valid": 2, "n_test": 2, "duration_s": 0.25},
  "codec": {"n_coarse_basis": 16, "n_fine_basis": 8, "n_groups": 2},
  "separator": {"n_blocks": 2, "chunk_len": 16, "inner_dim": 8, "rnn_hidden": 4},
  "train": {"epochs": 1, "segment_s": 0.25, "blocks_per_phase": 1, "log_every": 0}
})";

std::string TakeString(char* s) {
  std::string out = s ? s : "";
  ss_free(s);
  return out;
}

TEST(CApi, VersionAndLastError) {
  EXPECT_FALSE(std::string(ss_version()).empty());
  char* out = nullptr;
  EXPECT_EQ(ss_config_resolve("{not json", nullptr, &out), SS_ERR_CONFIG);
  EXPECT_EQ(out, nullptr);
  EXPECT_FALSE(std::string(ss_last_error()).empty());
  EXPECT_EQ(ss_config_resolve(nullptr, nullptr, nullptr), SS_ERR_INVALID_ARGUMENT);
}

TEST(CApi, ConfigResolveAppliesOverrides) {
  char* out = nullptr;
  ASSERT_EQ(ss_config_resolve(kTinyConfig, R"({"train.seed": 7, "variant": "BASE"})", &out),
            SS_OK)
      << ss_last_error();
  const auto doc = json::parse(TakeString(out));
  EXPECT_EQ(doc["train"]["seed"], 7);
  EXPECT_EQ(doc["variant"]["kind"], "BASE");
  EXPECT_EQ(doc["codec"]["n_coarse_basis"], 16);

  EXPECT_EQ(ss_config_resolve(kTinyConfig, R"({"train.bogus": 1})", &out), SS_ERR_CONFIG);
  EXPECT_NE(std::string(ss_last_error()).find("train.bogus"), std::string::npos);
  EXPECT_EQ(ss_config_resolve(kTinyConfig, "[1]", &out), SS_ERR_CONFIG);
}

TEST(CApi, WavRoundTripAndErrors) {
  TempDir dir("capi_wav");
  const std::vector<float> x{0.0f, 0.5f, -0.5f, 0.25f};
  const auto path = dir / "x.wav";
  ASSERT_EQ(ss_wav_write(path.c_str(), x.data(), x.size(), 8000), SS_OK);
  float* y = nullptr;
  size_t n = 0;
  int rate = 0;
  ASSERT_EQ(ss_wav_read(path.c_str(), 0, &y, &n, &rate), SS_OK);
  ASSERT_EQ(n, x.size());
  EXPECT_EQ(rate, 8000);
  for (size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], x[i], 1.0 / 32768);
  ss_free(y);
  EXPECT_EQ(ss_wav_read(path.c_str(), 16000, &y, &n, &rate), SS_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(ss_wav_read((dir / "none.wav").c_str(), 0, &y, &n, &rate), SS_ERR_IO);
}

TEST(CApi, TrainLoadSeparateEvaluate) {
  TempDir dir("capi_flow");
  char* resolved = nullptr;
  ASSERT_EQ(ss_config_resolve(kTinyConfig, nullptr, &resolved), SS_OK) << ss_last_error();
  const std::string cfg = TakeString(resolved);

  char* manifest = nullptr;
  ASSERT_EQ(ss_make_corpus(cfg.c_str(), (dir / "corpus").c_str(), 0, &manifest), SS_OK)
      << ss_last_error();
  const std::string man = TakeString(manifest);
  EXPECT_EQ(ss_make_corpus(cfg.c_str(), (dir / "corpus").c_str(), 0, &manifest),
            SS_ERR_INVALID_ARGUMENT);

  char* summary = nullptr;
  ASSERT_EQ(ss_train(cfg.c_str(), man.c_str(), (dir / "run").c_str(), 0, 0, &summary), SS_OK)
      << ss_last_error();
  EXPECT_EQ(json::parse(TakeString(summary))["steps"], 1);

  ss_model* model = nullptr;
  EXPECT_EQ(ss_model_load((dir / "missing.ckpt").c_str(), &model), SS_ERR_IO);
  ASSERT_EQ(ss_model_load((dir / "run/best.ckpt").c_str(), &model), SS_OK) << ss_last_error();
  char* info = nullptr;
  ASSERT_EQ(ss_model_info(model, &info), SS_OK);
  const auto info_doc = json::parse(TakeString(info));
  EXPECT_EQ(info_doc["n_sources"], 2);
  EXPECT_EQ(info_doc["sample_rate"], 8000);
  EXPECT_EQ(info_doc["variant"], "SRSSN");

  std::vector<float> mix(777);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = 0.3f * std::sin(0.05f * i);
  std::vector<float> out(2 * mix.size());
  int used_refined = -1;
  ASSERT_EQ(ss_model_separate(model, mix.data(), mix.size(), 8000, out.data(), &used_refined),
            SS_OK);
  EXPECT_EQ(used_refined, 1);
  for (float v : out) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(ss_model_separate(model, mix.data(), mix.size(), 16000, out.data(), nullptr),
            SS_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(ss_last_error()).find("16000"), std::string::npos);
  EXPECT_EQ(ss_model_separate(model, mix.data(), 0, 8000, out.data(), nullptr),
            SS_ERR_INVALID_ARGUMENT);

  char* eval = nullptr;
  ASSERT_EQ(ss_evaluate(model, man.c_str(), "test", (dir / "r.jsonl").c_str(), &eval), SS_OK)
      << ss_last_error();
  EXPECT_EQ(json::parse(TakeString(eval))["n_records"], 2);
  EXPECT_EQ(ss_evaluate(model, man.c_str(), "dev", nullptr, &eval), SS_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(ss_last_error()).find("valid"), std::string::npos);
  ss_model_free(model);
  ss_model_free(nullptr);
}

}  // namespace
