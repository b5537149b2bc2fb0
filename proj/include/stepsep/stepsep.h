/* Copyright 2026 The stepsep Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the stepsep separation library.
 *
 * Every call returns an ss_status. On failure, ss_last_error() returns a
 * message for the calling thread that stays valid until its next call.
 * Strings and buffers handed out through out-parameters are owned by the
 * caller and must be released with ss_free().
 */

#ifndef STEPSEP_STEPSEP_H_
#define STEPSEP_STEPSEP_H_

#include <stddef.h>

#if defined(_WIN32)
#define SS_API __declspec(dllexport)
#else
#define SS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ss_status {
  SS_OK = 0,
  SS_ERR_INVALID_ARGUMENT = 1,
  SS_ERR_CONFIG = 2,
  SS_ERR_IO = 3,
  SS_ERR_SHAPE = 4,
  SS_ERR_NUMERIC = 5,
  SS_ERR_INTERNAL = 6
} ss_status;

typedef struct ss_model ss_model;

SS_API const char* ss_version(void);
SS_API const char* ss_last_error(void);
SS_API void ss_free(void* ptr);

/* 0 = warnings only, 1 = info (default), 2 = debug. Logs go to stderr. */
SS_API void ss_set_log_level(int level);

/* Parses a run-config document (JSON text; NULL or "" for defaults),
 * applies dotted-key overrides given as a JSON object such as
 * {"train.seed": 3}, validates the result and returns the fully resolved
 * document. */
SS_API ss_status ss_config_resolve(const char* config_json, const char* overrides_json,
                                   char** resolved_json);

/* Generates the synthetic corpus described by the config's corpus section.
 * Returns the manifest path. Fails if a manifest exists unless force != 0. */
SS_API ss_status ss_make_corpus(const char* config_json, const char* out_dir, int force,
                                char** manifest_path);

/* Trains into out_dir (best.ckpt, last.ckpt, metrics.jsonl). With
 * resume != 0 training continues from out_dir/last.ckpt. Returns a JSON
 * summary. */
SS_API ss_status ss_train(const char* config_json, const char* manifest, const char* out_dir,
                          int resume, int force, char** summary_json);

SS_API ss_status ss_model_load(const char* checkpoint_path, ss_model** model);
SS_API void ss_model_free(ss_model* model);

/* JSON with variant, block_kind, n_sources, sample_rate, n_params, epoch. */
SS_API ss_status ss_model_info(const ss_model* model, char** info_json);

/* Separates one mono signal at the model's sample rate. out receives
 * n_sources * n samples, source-major. used_refined (optional) reports
 * whether the refining-phase estimate was returned. */
SS_API ss_status ss_model_separate(const ss_model* model, const float* samples, size_t n,
                                   int sample_rate, float* out, int* used_refined);

/* Evaluates one manifest split; writes one JSON row per record to
 * report_path (may be NULL) and returns the summary JSON. */
SS_API ss_status ss_evaluate(const ss_model* model, const char* manifest, const char* split,
                             const char* report_path, char** summary_json);

/* Runs the ablation grid of the config and returns the table as JSON. */
SS_API ss_status ss_run_ablation(const char* config_json, const char* manifest,
                                 const char* out_dir, char** table_json);

/* 16-bit PCM mono WAV. expected_rate <= 0 accepts any rate. */
SS_API ss_status ss_wav_read(const char* path, int expected_rate, float** samples, size_t* n,
                             int* sample_rate);
SS_API ss_status ss_wav_write(const char* path, const float* samples, size_t n,
                              int sample_rate);

#ifdef __cplusplus
}
#endif

#endif /* STEPSEP_STEPSEP_H_ */
