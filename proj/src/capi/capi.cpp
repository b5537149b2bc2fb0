// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "common/alloc.h"
#include "common/error.h"
#include "common/log.h"
#include "config/config.h"
#include "data/corpus.h"
#include "data/wav.h"
#include "stepsep/stepsep.h"
#include "train/checkpoint.h"
#include "train/trainer.h"

struct ss_model {
  std::unique_ptr<stepsep::model::Model<float>> model;
  int epoch = 0;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

ss_status Fail(ss_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

ss_status FromKind(stepsep::ErrorKind k) {
  switch (k) {
    case stepsep::ErrorKind::kInvalidArgument:
      return SS_ERR_INVALID_ARGUMENT;
    case stepsep::ErrorKind::kConfig:
      return SS_ERR_CONFIG;
    case stepsep::ErrorKind::kIo:
      return SS_ERR_IO;
    case stepsep::ErrorKind::kShape:
      return SS_ERR_SHAPE;
    case stepsep::ErrorKind::kNumeric:
      return SS_ERR_NUMERIC;
    case stepsep::ErrorKind::kInternal:
      break;
  }
  return SS_ERR_INTERNAL;
}

template <typename F>
ss_status Guard(F&& body) {
  try {
    stepsep::TuneAllocator();
    body();
    g_last_error.clear();
    return SS_OK;
  } catch (const stepsep::Error& e) {
    return Fail(FromKind(e.kind()), e.what());
  } catch (const json::exception& e) {
    return Fail(SS_ERR_CONFIG, std::string("malformed JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return Fail(SS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Fail(SS_ERR_INTERNAL, e.what());
  } catch (...) {
    return Fail(SS_ERR_INTERNAL, "unknown error");
  }
}

void Require(bool ok, const char* what) {
  if (!ok) throw stepsep::InvalidArgument(what);
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

stepsep::RunConfig ParseConfig(const char* text) {
  const json doc = (text && *text) ? json::parse(text) : json::object();
  return stepsep::ParseRunConfig(doc);
}

}  // namespace

extern "C" {

const char* ss_version(void) { return "0.1.0"; }

const char* ss_last_error(void) { return g_last_error.c_str(); }

void ss_free(void* ptr) { std::free(ptr); }

void ss_set_log_level(int level) { stepsep::SetLogLevel(level); }

ss_status ss_config_resolve(const char* config_json, const char* overrides_json,
                            char** resolved_json) {
  return Guard([&] {
    Require(resolved_json != nullptr, "resolved_json must not be NULL");
    json doc = (config_json && *config_json) ? json::parse(config_json) : json::object();
    if (overrides_json && *overrides_json) {
      const json ov = json::parse(overrides_json);
      if (!ov.is_object()) throw stepsep::ConfigError("overrides must be a JSON object");
      for (auto it = ov.begin(); it != ov.end(); ++it) {
        stepsep::ApplyOverride(doc, it.key(), it.value());
      }
    }
    *resolved_json = CopyString(stepsep::ToJson(stepsep::ParseRunConfig(doc)).dump(2));
  });
}

ss_status ss_make_corpus(const char* config_json, const char* out_dir, int force,
                         char** manifest_path) {
  return Guard([&] {
    Require(out_dir && *out_dir, "out_dir must be a non-empty path");
    const auto run = ParseConfig(config_json);
    const std::string path = stepsep::data::MakeCorpus(run.corpus, out_dir, force != 0);
    if (manifest_path) *manifest_path = CopyString(path);
  });
}

ss_status ss_train(const char* config_json, const char* manifest, const char* out_dir, int resume,
                   int force, char** summary_json) {
  return Guard([&] {
    Require(manifest && *manifest, "manifest must be a non-empty path");
    Require(out_dir && *out_dir, "out_dir must be a non-empty path");
    const auto run = ParseConfig(config_json);
    const auto s = stepsep::train::Train(run, {manifest, out_dir, resume != 0, force != 0});
    if (summary_json) {
      json j;
      j["steps"] = s.steps;
      j["best_valid_delta_si_snr"] = s.best_valid;
      j["best_checkpoint"] = s.best_checkpoint;
      j["last_checkpoint"] = s.last_checkpoint;
      json hist = json::array();
      for (const auto& e : s.history) hist.push_back(e.ToJson());
      j["epochs"] = hist;
      *summary_json = CopyString(j.dump(2));
    }
  });
}

ss_status ss_model_load(const char* checkpoint_path, ss_model** model) {
  return Guard([&] {
    Require(checkpoint_path && *checkpoint_path, "checkpoint path must be non-empty");
    Require(model != nullptr, "model must not be NULL");
    const auto ck = stepsep::train::LoadCheckpoint(checkpoint_path);
    auto m = std::make_unique<ss_model>();
    m->model = ck.BuildModel();
    m->epoch = ck.state.epoch;
    *model = m.release();
  });
}

void ss_model_free(ss_model* model) { delete model; }

ss_status ss_model_info(const ss_model* model, char** info_json) {
  return Guard([&] {
    Require(model && info_json, "model and info_json must not be NULL");
    const auto& cfg = model->model->config();
    json j;
    j["variant"] = stepsep::VariantName(cfg.variant);
    j["block_kind"] = stepsep::BlockKindName(cfg.coarse_separator.block_kind);
    j["n_sources"] = model->model->n_sources();
    j["sample_rate"] = cfg.sample_rate;
    j["n_params"] = model->model->params().Count();
    j["has_refine"] = model->model->has_refine();
    j["epoch"] = model->epoch;
    *info_json = CopyString(j.dump(2));
  });
}

ss_status ss_model_separate(const ss_model* model, const float* samples, size_t n,
                            int sample_rate, float* out, int* used_refined) {
  return Guard([&] {
    Require(model && samples && out, "model, samples and out must not be NULL");
    Require(n > 0, "empty input");
    const int expected = model->model->config().sample_rate;
    if (sample_rate != expected) {
      throw stepsep::InvalidArgument("input sample rate " + std::to_string(sample_rate) +
                                     " Hz does not match the model rate " +
                                     std::to_string(expected) + " Hz");
    }
    stepsep::Waveform w;
    w.samples.assign(samples, samples + n);
    w.sample_rate = sample_rate;
    w.Validate();
    bool refined = false;
    const auto est = model->model->Separate(w.samples, &refined);
    for (size_t j = 0; j < est.size(); ++j) std::copy(est[j].begin(), est[j].end(), out + j * n);
    if (used_refined) *used_refined = refined ? 1 : 0;
  });
}

ss_status ss_evaluate(const ss_model* model, const char* manifest, const char* split,
                      const char* report_path, char** summary_json) {
  return Guard([&] {
    Require(model && manifest && split, "model, manifest and split must not be NULL");
    const auto rep = stepsep::train::EvaluateSplit(*model->model, manifest, split);
    if (report_path && *report_path) stepsep::train::WriteReport(rep, report_path);
    if (summary_json) *summary_json = CopyString(rep.Summary().dump(2));
  });
}

ss_status ss_run_ablation(const char* config_json, const char* manifest, const char* out_dir,
                          char** table_json) {
  return Guard([&] {
    Require(manifest && *manifest && out_dir && *out_dir, "manifest and out_dir are required");
    const auto run = ParseConfig(config_json);
    const auto table = stepsep::train::RunAblation(run, manifest, out_dir);
    if (table_json) *table_json = CopyString(table.ToJson().dump(2));
  });
}

ss_status ss_wav_read(const char* path, int expected_rate, float** samples, size_t* n,
                      int* sample_rate) {
  return Guard([&] {
    Require(path && samples && n, "path, samples and n must not be NULL");
    const auto w = stepsep::data::ReadWav(path, expected_rate);
    float* buf = static_cast<float*>(std::malloc(std::max<size_t>(1, w.size()) * sizeof(float)));
    if (!buf) throw std::bad_alloc();
    std::copy(w.samples.begin(), w.samples.end(), buf);
    *samples = buf;
    *n = w.size();
    if (sample_rate) *sample_rate = w.sample_rate;
  });
}

ss_status ss_wav_write(const char* path, const float* samples, size_t n, int sample_rate) {
  return Guard([&] {
    Require(path && (samples || n == 0), "path and samples must not be NULL");
    stepsep::Waveform w;
    w.samples.assign(samples, samples + n);
    w.sample_rate = sample_rate;
    stepsep::data::WriteWav(path, w);
  });
}

}  // extern "C"
