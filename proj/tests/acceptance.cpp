// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance [ablation_dir]
//
// Criteria 3 and 4 read the outputs of tools/run_acceptance.sh (default
// directory: <build>/accept/ablation). Exit status is 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common/log.h"
#include "config/config.h"
#include "data/corpus.h"
#include "grad_check.h"
#include "model/model.h"
#include "objective/objective.h"
#include "test_util.h"
#include "train/checkpoint.h"
#include "train/trainer.h"

namespace stepsep {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string Fmt(const char* fmt, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

Verdict InvariantSuite() {
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"test_separator",
       "Chunking.OverlapAddInvertsSegmentation:*MasksShapeAndNonNegativity*"},
      {"test_objective", "SiSnr.ScaleInvariance:Pit.*"},
      {"test_codec", "FineCodec.GroupEquivariance:CoarseCodec.NonNegativeForRandomParameters"},
      {"test_phases", "Phases.EveryVariantPreservesLength:Merge.*:Refine.*"},
  };
  const auto t0 = std::chrono::steady_clock::now();
  std::string failed;
  int passed = 0;
  for (const auto& [bin, filter] : runs) {
    const std::string cmd =
        std::string(STEPSEP_BIN_DIR) + "/" + bin + " --gtest_filter='" + filter + "' 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    int count = 0;
    char line[512];
    while (pipe && std::fgets(line, sizeof(line), pipe)) {
      std::sscanf(line, "[  PASSED  ] %d", &count);
    }
    if (!pipe || ::pclose(pipe) != 0 || count == 0) failed += " " + bin;
    passed += count;
  }
  const double s = Seconds(t0);
  Verdict v;
  v.pass = failed.empty() && s < 120;
  v.detail = Fmt("%.0f invariant tests passed in %.1f s (limit 120 s)", passed, s);
  if (!failed.empty()) v.detail += "; failing:" + failed;
  return v;
}

Verdict GradientCheck() {
  const auto t0 = std::chrono::steady_clock::now();
  int checked = 0;
  double worst = 0;
  for (BlockKind kind : {BlockKind::kDprnn, BlockKind::kDptnet}) {
    RunConfig run;
    run.codec.n_coarse_basis = 16;
    run.codec.n_fine_basis = 8;
    run.codec.n_groups = 2;
    run.separator.block_kind = kind;
    run.separator.n_blocks = 1;
    run.separator.chunk_len = 4;
    run.separator.inner_dim = 8;
    run.separator.rnn_hidden = 4;
    run.separator.attn_heads = 2;
    run.train.blocks_per_phase = 1;
    model::Model<double> m(ResolveModelConfig(run), 5);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> d(0, 0.3);
    ag::Buffer<double> mix(64);
    std::vector<double> targets(2 * 64);
    for (auto& e : mix) e = d(rng);
    for (auto& e : targets) e = d(rng);
    const auto x = ag::Var<double>::Constant({1, 64}, std::move(mix));
    std::vector<ag::Var<double>> leaves;
    for (auto& [name, p] : m.params().entries()) leaves.push_back(p);
    const auto r = testing::CheckGradients(
        [&] {
          auto out = m.Forward(x, true);
          return objective::ComputeJointLoss<double>(out.coarse, out.refined, targets,
                                                     VariantKind::kSrssn)
              .total;
        },
        leaves, 2);
    checked += r.checked;
    worst = std::max(worst, r.max_rel_error);
  }
  const double s = Seconds(t0);
  Verdict v;
  v.pass = checked >= 100 && worst < 1e-3 && s < 300;
  v.detail = Fmt("full SRSSN graph, DPRNN and DPTNET: %.0f entries, max rel err %.2e, %.1f s",
                 checked, worst, s);
  return v;
}

struct RunResult {
  bool found = false;
  double test_delta = 0;
  double coarse = 0;
  double refined = 0;
  bool has_refined = false;
  int64_t steps = 0;
  double seconds = 0;
};

RunResult ReadRun(const fs::path& dir) {
  RunResult r;
  std::ifstream in(dir / "result.json");
  if (!in) return r;
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) return r;
  r.found = true;
  r.test_delta = doc.at("test_delta_si_snr").get<double>();
  const auto& summary = doc.at("summary");
  r.coarse = summary.at("coarse").at("delta_si_snr").get<double>();
  if (!summary.at("refined").is_null()) {
    r.has_refined = true;
    r.refined = summary.at("refined").at("delta_si_snr").get<double>();
  }
  std::ifstream metrics(dir / "metrics.jsonl");
  for (std::string line; std::getline(metrics, line);) {
    const json e = json::parse(line);
    r.steps = e.at("step").get<int64_t>();
    r.seconds += e.at("seconds").get<double>();
  }
  return r;
}

Verdict ToyLearning(const fs::path& ablation) {
  const auto r = ReadRun(ablation / "DPRNN/SRSSN/seed0");
  Verdict v;
  if (!r.found) {
    v.detail = "no results under " + (ablation / "DPRNN/SRSSN/seed0").string() +
               "; run tools/run_acceptance.sh";
    return v;
  }
  const double minutes = r.seconds / 60;
  v.pass = r.has_refined && r.refined >= 5 && r.refined >= r.coarse && r.steps <= 2000 &&
           minutes <= 30;
  v.detail = Fmt("DPRNN-SRSSN test dSI-SNR refined %+.2f dB, coarse %+.2f dB, ", r.refined,
                 r.coarse) +
             Fmt("%.0f steps, %.1f CPU-min", static_cast<double>(r.steps), minutes);
  if (r.refined < r.coarse) v.detail += " (refined below coarse)";
  return v;
}

Verdict AblationTrend(const fs::path& ablation) {
  std::map<std::string, double> mean;
  double seconds = 0;
  Verdict v;
  for (const char* variant : {"BASE", "SRSSN_1D", "SRSSN"}) {
    double sum = 0;
    for (int k = 0; k < 3; ++k) {
      const auto dir = ablation / "DPRNN" / variant / ("seed" + std::to_string(k));
      const auto r = ReadRun(dir);
      if (!r.found) {
        v.detail = "no results under " + dir.string() + "; run tools/run_acceptance.sh";
        return v;
      }
      sum += r.test_delta;
      seconds += r.seconds;
    }
    mean[variant] = sum / 3;
  }
  const double gap_top = mean["SRSSN"] - mean["SRSSN_1D"];
  const double gap_low = mean["SRSSN_1D"] - mean["BASE"];
  const double hours = seconds / 3600;
  v.pass = gap_top >= -0.2 && gap_low >= -0.2 && hours <= 2;
  v.detail = Fmt("3-seed means SRSSN %+.2f, SRSSN_1D %+.2f, BASE %+.2f dB; ", mean["SRSSN"],
                 mean["SRSSN_1D"], mean["BASE"]) +
             Fmt("gaps %+.2f, %+.2f dB (floor -0.2); %.2f CPU-h", gap_top, gap_low, hours);
  return v;
}

Verdict Determinism() {
  testing::TempDir dir("acceptance");
  std::ifstream in(STEPSEP_SOURCE_DIR "/configs/toy.json");
  RunConfig run = ParseRunConfig(json::parse(in));
  run.corpus.n_train = 8;
  run.corpus.n_valid = 4;
  run.corpus.n_test = 4;
  run.train.epochs = 1;
  const auto manifest = data::MakeCorpus(run.corpus, dir / "corpus", false);
  const auto a = train::Train(run, {manifest, dir / "a", false, false});
  const auto b = train::Train(run, {manifest, dir / "b", false, false});
  const double la = a.history.at(0).loss_total, lb = b.history.at(0).loss_total;

  const auto ma = train::LoadCheckpoint(dir / "a/best.ckpt").BuildModel();
  const auto mb = train::LoadCheckpoint(dir / "b/best.ckpt").BuildModel();
  train::WriteReport(train::EvaluateSplit(*ma, manifest, "test"), dir / "ra.jsonl");
  train::WriteReport(train::EvaluateSplit(*mb, manifest, "test"), dir / "rb.jsonl");
  const bool reports = testing::ReadFile(dir / "ra.jsonl") == testing::ReadFile(dir / "rb.jsonl");

  const auto loaded = train::LoadCheckpoint(dir / "a/last.ckpt");
  train::Adam<float> adam(ma->params(), {});
  loaded.RestoreOptimizer(adam);
  const auto model = loaded.BuildModel();
  train::SaveCheckpoint(dir / "copy.ckpt", *model, &adam, loaded.state);
  const bool round_trip =
      testing::ReadFile(dir / "a/last.ckpt") == testing::ReadFile(dir / "copy.ckpt");

  Verdict v;
  v.pass = la == lb && reports && round_trip;
  v.detail = Fmt("epoch-1 loss %.9g vs %.9g; ", la, lb) +
             (reports ? "reports identical; " : "reports differ; ") +
             (round_trip ? "checkpoint round trip exact" : "checkpoint round trip differs");
  return v;
}

Verdict WorkedValues() {
  const std::vector<double> a{1, 1}, b{1, 0}, c{3, 4};
  const double v1 = objective::SiSnr<double, double>(a, b);
  const double v2 = objective::SiSnr<double, double>(b, c);
  const double v3 = objective::SdrSimple<double, double>(b, c);
  Verdict v;
  v.pass = std::abs(v1) <= 1e-6 && std::abs(v2 + 2.499) <= 1e-3 && std::abs(v3 - 0.969) <= 1e-3;
  v.detail = Fmt("si_snr([1,1],[1,0]) = %+.4f, si_snr([1,0],[3,4]) = %+.4f, ", v1, v2) +
             Fmt("sdr_simple([1,0],[3,4]) = %+.4f dB", v3);
  return v;
}

}  // namespace
}  // namespace stepsep

int main(int argc, char** argv) {
  using namespace stepsep;
  SetLogLevel(0);
  const fs::path ablation = argc > 1 ? fs::path(argv[1]) : fs::path(STEPSEP_ACCEPT_DIR);
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"invariants", InvariantSuite},
      {"gradient check", GradientCheck},
      {"toy learning", [&] { return ToyLearning(ablation); }},
      {"ablation trend", [&] { return AblationTrend(ablation); }},
      {"determinism", Determinism},
      {"worked values", WorkedValues},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.detail = std::string("error: ") + e.what();
    }
    failures += !v.pass;
    std::printf("criterion %zu %-15s %s  %s\n", i + 1, criteria[i].first,
                v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
