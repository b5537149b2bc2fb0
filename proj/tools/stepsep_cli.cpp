// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every subcommand resolves and validates the run
// config before touching the filesystem.
//
// Exit codes: 0 ok, 1 user error, 2 internal error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stepsep/stepsep.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

struct CliError {
  int code;
  std::string message;
};

int ExitCodeFor(ss_status s) {
  if (s == SS_OK) return kExitOk;
  return s == SS_ERR_INTERNAL || s == SS_ERR_NUMERIC ? kExitInternal : kExitUser;
}

void Check(ss_status s) {
  if (s != SS_OK) throw CliError{ExitCodeFor(s), ss_last_error()};
}

// Owns a string allocated by the library.
class LibString {
 public:
  LibString() = default;
  ~LibString() { ss_free(ptr_); }
  LibString(const LibString&) = delete;
  LibString& operator=(const LibString&) = delete;
  char** out() { return &ptr_; }
  std::string str() const { return ptr_ ? ptr_ : ""; }

 private:
  char* ptr_ = nullptr;
};

class Model {
 public:
  explicit Model(const std::string& path) { Check(ss_model_load(path.c_str(), &m_)); }
  ~Model() { ss_model_free(m_); }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  const ss_model* get() const { return m_; }

 private:
  ss_model* m_ = nullptr;
};

void Info(const std::string& msg) { std::clog << "[info] " << msg << '\n'; }

std::string ReadText(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{kExitUser, "cannot read config '" + path + "'"};
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Config file plus command-line overrides, in the order they are applied.
struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;  // key=value
  std::vector<std::pair<std::string, json>> flags;

  std::string Resolve() const {
    const std::string text = path.empty() ? "{}" : ReadText(path);
    json overrides = json::object();
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw CliError{kExitUser, "--set expects key=value, got '" + kv + "'"};
      }
      const std::string key = kv.substr(0, eq);
      const std::string raw = kv.substr(eq + 1);
      json value = json::parse(raw, nullptr, false);
      if (value.is_discarded()) value = raw;  // bare strings
      overrides[key] = value;
    }
    for (const auto& [key, value] : flags) overrides[key] = value;
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
      Info("override " + it.key() + " = " + it.value().dump());
    }
    LibString resolved;
    Check(ss_config_resolve(text.c_str(), overrides.dump().c_str(), resolved.out()));
    return resolved.str();
  }
};

void AddConfigOptions(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.path, "Run-config JSON file (defaults if omitted)");
  cmd->add_option("--set", args.sets, "Override any config key, e.g. --set train.epochs=5");
}

std::string Stem(const std::string& path) { return fs::path(path).stem().string(); }

void PrintSummary(const json& s) {
  std::printf("split %s, %d records, variant %s\n", s["split"].get<std::string>().c_str(),
              s["n_records"].get<int>(), s["variant"].get<std::string>().c_str());
  std::printf("coarse : dSI-SNR %+.3f dB  dSDR %+.3f dB\n",
              s["coarse"]["delta_si_snr"].get<double>(),
              s["coarse"]["delta_sdr"].get<double>());
  if (!s["refined"].is_null()) {
    std::printf("refined: dSI-SNR %+.3f dB  dSDR %+.3f dB\n",
                s["refined"]["delta_si_snr"].get<double>(),
                s["refined"]["delta_sdr"].get<double>());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepsep: two-phase time-domain speech separation"};
  app.require_subcommand(1);
  int log_level = 1;
  app.add_option("--log-level", log_level, "0 = warnings, 1 = info, 2 = debug")
      ->check(CLI::Range(0, 2));

  // mix
  ConfigArgs mix_cfg;
  std::string mix_out;
  std::optional<uint64_t> mix_seed;
  bool mix_force = false;
  auto* mix = app.add_subcommand("mix", "Generate the synthetic mixture corpus");
  AddConfigOptions(mix, mix_cfg);
  mix->add_option("--out", mix_out, "Output directory (created if missing)")->required();
  mix->add_option("--seed", mix_seed, "Corpus seed (overrides corpus.seed)");
  mix->add_flag("--force", mix_force, "Overwrite an existing manifest");

  // train
  ConfigArgs train_cfg;
  std::string train_manifest, train_out, train_variant;
  std::optional<uint64_t> train_seed;
  bool train_resume = false, train_force = false;
  auto* train = app.add_subcommand("train", "Train a model");
  AddConfigOptions(train, train_cfg);
  train->add_option("--manifest", train_manifest, "Corpus manifest (JSONL)")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--seed", train_seed, "Training seed (overrides train.seed)");
  train->add_option("--variant", train_variant, "Model variant, e.g. SRSSN or BASE");
  train->add_flag("--resume", train_resume, "Continue from <out>/last.ckpt");
  train->add_flag("--force", train_force, "Overwrite an existing run directory");

  // separate
  std::string sep_ckpt, sep_input, sep_out;
  bool sep_force = false;
  auto* separate = app.add_subcommand("separate", "Separate one WAV file");
  separate->add_option("--checkpoint", sep_ckpt, "Model checkpoint")->required();
  separate->add_option("--input", sep_input, "Mono 16-bit WAV at the model rate")->required();
  separate->add_option("--out", sep_out, "Output directory")->required();
  separate->add_flag("--force", sep_force, "Overwrite existing outputs");

  // evaluate
  std::string ev_ckpt, ev_manifest, ev_split = "test", ev_out;
  bool ev_force = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a manifest split");
  evaluate->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  evaluate->add_option("--manifest", ev_manifest, "Corpus manifest (JSONL)")->required();
  evaluate->add_option("--split", ev_split, "train, valid or test")->capture_default_str();
  evaluate->add_option("--out", ev_out, "Report directory (default: the checkpoint's)");
  evaluate->add_flag("--force", ev_force, "Overwrite an existing report");

  // ablate
  ConfigArgs ab_cfg;
  std::string ab_manifest, ab_out;
  std::optional<uint64_t> ab_seed;
  auto* ablate = app.add_subcommand("ablate", "Train and compare the configured variants");
  AddConfigOptions(ablate, ab_cfg);
  ablate->add_option("--manifest", ab_manifest, "Corpus manifest (JSONL)")->required();
  ablate->add_option("--out", ab_out, "Output directory")->required();
  ablate->add_option("--seed", ab_seed, "First training seed (overrides train.seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUser;
  }
  ss_set_log_level(log_level);

  try {
    if (*mix) {
      if (mix_seed) mix_cfg.flags.emplace_back("corpus.seed", *mix_seed);
      const std::string cfg = mix_cfg.Resolve();
      LibString manifest;
      Check(ss_make_corpus(cfg.c_str(), mix_out.c_str(), mix_force ? 1 : 0, manifest.out()));
      std::printf("%s\n", manifest.str().c_str());
    } else if (*train) {
      if (train_seed) train_cfg.flags.emplace_back("train.seed", *train_seed);
      if (!train_variant.empty()) train_cfg.flags.emplace_back("variant", train_variant);
      const std::string cfg = train_cfg.Resolve();
      LibString summary;
      Check(ss_train(cfg.c_str(), train_manifest.c_str(), train_out.c_str(),
                     train_resume ? 1 : 0, train_force ? 1 : 0, summary.out()));
      const json s = json::parse(summary.str());
      std::printf("trained %lld steps; best valid dSI-SNR %+.3f dB; best checkpoint %s\n",
                  s["steps"].get<long long>(), s["best_valid_delta_si_snr"].get<double>(),
                  s["best_checkpoint"].get<std::string>().c_str());
    } else if (*separate) {
      Model model(sep_ckpt);
      LibString info;
      Check(ss_model_info(model.get(), info.out()));
      const json meta = json::parse(info.str());
      const int rate = meta["sample_rate"].get<int>();
      const int d = meta["n_sources"].get<int>();
      std::vector<fs::path> outputs;
      for (int j = 1; j <= d; ++j) {
        const std::string name = Stem(sep_input) + "_spk" + std::to_string(j) + ".wav";
        outputs.push_back(fs::path(sep_out) / name);
        if (fs::exists(outputs.back()) && !sep_force) {
          throw CliError{kExitUser, "'" + outputs.back().string() +
                                        "' exists; pass --force to overwrite"};
        }
      }
      float* samples = nullptr;
      size_t n = 0;
      Check(ss_wav_read(sep_input.c_str(), rate, &samples, &n, nullptr));
      std::vector<float> in(samples, samples + n);
      ss_free(samples);
      std::vector<float> est(static_cast<size_t>(d) * n);
      int refined = 0;
      Check(ss_model_separate(model.get(), in.data(), n, rate, est.data(), &refined));
      std::error_code ec;
      fs::create_directories(sep_out, ec);
      if (ec) throw CliError{kExitUser, "cannot create '" + sep_out + "': " + ec.message()};
      for (int j = 0; j < d; ++j) {
        Check(ss_wav_write(outputs[j].string().c_str(), est.data() + static_cast<size_t>(j) * n,
                           n, rate));
        std::printf("%s\n", outputs[j].string().c_str());
      }
      Info(std::string("used ") + (refined ? "refined" : "coarse") + "-phase estimates");
    } else if (*evaluate) {
      const fs::path dir = ev_out.empty() ? fs::path(ev_ckpt).parent_path() : fs::path(ev_out);
      const fs::path report = dir / ("report_" + ev_split + ".jsonl");
      const fs::path summary_path = dir / ("summary_" + ev_split + ".json");
      if (fs::exists(report) && !ev_force) {
        throw CliError{kExitUser, "'" + report.string() + "' exists; pass --force to overwrite"};
      }
      Model model(ev_ckpt);
      std::error_code ec;
      if (!dir.empty()) fs::create_directories(dir, ec);
      LibString summary;
      Check(ss_evaluate(model.get(), ev_manifest.c_str(), ev_split.c_str(),
                        report.string().c_str(), summary.out()));
      const json s = json::parse(summary.str());
      std::ofstream(summary_path) << s.dump(2) << '\n';
      PrintSummary(s);
      Info("report: " + report.string());
    } else if (*ablate) {
      if (ab_seed) ab_cfg.flags.emplace_back("train.seed", *ab_seed);
      const std::string cfg = ab_cfg.Resolve();
      LibString table;
      Check(ss_run_ablation(cfg.c_str(), ab_manifest.c_str(), ab_out.c_str(), table.out()));
      std::ifstream md(fs::path(ab_out) / "ablation.md");
      std::cout << md.rdbuf();
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}
