// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic two-talker corpus: band-limited "speakers", SNR-controlled
// mixing, JSONL manifests and fixed-length training segments.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "common/waveform.h"
#include "config/config.h"

namespace stepsep::data {

// Counter-based seeding so every generator is a pure function of its keys.
uint64_t MixSeed(uint64_t seed, uint64_t a, uint64_t b = 0);
// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
inline double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
inline double UniformIn(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * Uniform01(rng);
}

struct SpeakerProfile {
  int id = 0;
  int family = 0;  // 0 = low band, 1 = high band
  double band_lo = 0;
  double band_hi = 0;
  double f0 = 0;
  double noise_level = 0;
};

// Speaker pool; even ids are low-band, odd ids high-band.
std::vector<SpeakerProfile> MakeSpeakers(const CorpusConfig& cfg);

// Deterministic per (cfg.seed, speaker.id, index); samples in [-1, 1].
Waveform SynthUtterance(const SpeakerProfile& speaker, const CorpusConfig& cfg, uint64_t index);

// Broadband background noise for the noisy recipe.
Waveform SynthNoise(const CorpusConfig& cfg, uint64_t index, int64_t length);

struct MixResult {
  Waveform mixture;
  std::vector<Waveform> sources;  // stored references, after all gains
  std::optional<Waveform> noise;
  double source_gain = 1.0;  // applied to the second source
  double peak_gain = 1.0;    // applied to everything when clipping would occur
};

// Rescales the second source to 10 log10(|s1|^2 / |s2'|^2) = snr_db, adds
// optional noise at noise_snr_db relative to the louder source, and scales
// everything to a 0.9 peak if the mixture would clip. All outputs lie on the
// 16-bit grid and the mixture is their exact sum.
MixResult Mix(const std::vector<Waveform>& sources, double snr_db,
              const Waveform* noise = nullptr, double noise_snr_db = 0.0);

enum class Split { kTrain, kValid, kTest };
const std::vector<std::string>& SplitNames();
std::string SplitName(Split s);
// Throws InvalidArgument listing the valid names.
Split ParseSplit(const std::string& name);

struct MixtureRecord {
  std::string id;
  Split split = Split::kTrain;
  std::string mixture_path;               // absolute after LoadManifest
  std::vector<std::string> source_paths;  // D entries
  double snr_db = 0;
  std::optional<std::string> noise_path;
  std::optional<double> noise_snr_db;
  std::vector<int> speakers;
};

struct SpeakerSplit {
  std::vector<int> train, valid, test;
};
SpeakerSplit AssignSpeakers(const CorpusConfig& cfg);

// Writes WAVs and <out_dir>/manifest.jsonl; returns the manifest path.
// An existing manifest is an error unless force is set.
std::string MakeCorpus(const CorpusConfig& cfg, const std::string& out_dir, bool force);

// Paths in the returned records are resolved against the manifest directory.
std::vector<MixtureRecord> LoadManifest(const std::string& path);
std::vector<MixtureRecord> FilterSplit(const std::vector<MixtureRecord>& records, Split split);

struct LoadedRecord {
  Waveform mixture;
  std::vector<Waveform> sources;
  std::optional<Waveform> noise;
};
// Reads all files and trims them to the shortest length.
LoadedRecord LoadRecord(const MixtureRecord& record, int expected_rate);

struct Segment {
  std::vector<float> mixture;
  std::vector<std::vector<float>> targets;
  std::vector<float> noise;  // empty without noise
};
// Non-overlapping windows of segment_len samples; the remainder is dropped.
// Records shorter than one window yield nothing (with a warning).
std::vector<Segment> TrainingSegments(const LoadedRecord& record, int64_t segment_len,
                                      const std::string& record_id = "");

}  // namespace stepsep::data
