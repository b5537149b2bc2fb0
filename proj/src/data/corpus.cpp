// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "common/error.h"
#include "common/log.h"
#include "data/wav.h"

namespace stepsep::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kClipPeak = 0.999;
constexpr double kNormPeak = 0.9;
constexpr int kNoisePartials = 24;

uint64_t SplitMix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double Energy(const std::vector<double>& x) {
  double e = 0;
  for (double v : x) e += v * v;
  return e;
}

double Energy(const std::vector<float>& x) {
  double e = 0;
  for (float v : x) e += static_cast<double>(v) * v;
  return e;
}

Waveform FromPcm(const std::vector<int16_t>& pcm, int rate) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(pcm.size());
  std::transform(pcm.begin(), pcm.end(), w.samples.begin(), DequantizeSample);
  return w;
}

std::vector<int16_t> ToPcm(const Waveform& w) {
  std::vector<int16_t> pcm(w.samples.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    pcm[i] = static_cast<int16_t>(std::lrint(static_cast<double>(w.samples[i]) * 32768.0));
  }
  return pcm;
}

// Sum of sinusoids with random frequencies in [lo, hi] and random phases.
void AddBandNoise(std::vector<double>& out, std::mt19937_64& rng, double lo, double hi,
                  double level, int rate) {
  const double amp = level / std::sqrt(static_cast<double>(kNoisePartials));
  for (int k = 0; k < kNoisePartials; ++k) {
    const double f = UniformIn(rng, lo, hi);
    const double ph = UniformIn(rng, 0, kTwoPi);
    const double w = kTwoPi * f / rate;
    for (size_t t = 0; t < out.size(); ++t) out[t] += amp * std::sin(w * t + ph);
  }
}

}  // namespace

uint64_t MixSeed(uint64_t seed, uint64_t a, uint64_t b) {
  return SplitMix(SplitMix(SplitMix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ull));
}

std::vector<SpeakerProfile> MakeSpeakers(const CorpusConfig& cfg) {
  std::vector<SpeakerProfile> speakers(cfg.n_speakers_pool);
  const double nyquist_cap = 0.45 * cfg.sample_rate;
  for (int id = 0; id < cfg.n_speakers_pool; ++id) {
    std::mt19937_64 rng(MixSeed(cfg.seed, 0x5eed, static_cast<uint64_t>(id)));
    SpeakerProfile& s = speakers[id];
    s.id = id;
    s.family = id % 2;
    if (s.family == 0) {
      s.band_lo = UniformIn(rng, 100, 160);
      s.band_hi = UniformIn(rng, 800, 900);
      s.f0 = UniformIn(rng, 110, 200);
    } else {
      s.band_lo = UniformIn(rng, 1200, 1300);
      s.band_hi = std::min(UniformIn(rng, 2800, 3000), nyquist_cap);
      s.f0 = UniformIn(rng, 180, 320);
    }
    s.noise_level = UniformIn(rng, 0.2, 0.4);
  }
  return speakers;
}

Waveform SynthUtterance(const SpeakerProfile& sp, const CorpusConfig& cfg, uint64_t index) {
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x1000 + static_cast<uint64_t>(sp.id), index));
  const int rate = cfg.sample_rate;
  const auto n = static_cast<size_t>(std::llround(cfg.duration_s * rate));
  std::vector<double> x(n, 0.0);

  // Harmonic stack restricted to the speaker band, slowly gliding pitch.
  const double f0 = sp.f0 * UniformIn(rng, 0.95, 1.05);
  const double glide = UniformIn(rng, -0.05, 0.05);
  const int k_lo = std::max(1, static_cast<int>(std::ceil(sp.band_lo / f0)));
  const int k_hi = static_cast<int>(std::floor(sp.band_hi / (f0 * 1.06)));
  for (int k = k_lo; k <= k_hi; ++k) {
    const double amp = UniformIn(rng, 0.5, 1.0) / std::sqrt(static_cast<double>(k - k_lo + 1));
    double phase = UniformIn(rng, 0, kTwoPi);
    for (size_t t = 0; t < n; ++t) {
      const double f = k * f0 * (1.0 + glide * static_cast<double>(t) / n);
      phase += kTwoPi * f / rate;
      x[t] += amp * std::sin(phase);
    }
  }
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (double& v : x) v /= peak;
  }
  AddBandNoise(x, rng, sp.band_lo, sp.band_hi, sp.noise_level, rate);

  // Syllable-rate amplitude envelope.
  const double fm = UniformIn(rng, 2.0, 6.0);
  const double pm = UniformIn(rng, 0, kTwoPi);
  const double depth = UniformIn(rng, 0.3, 0.7);
  for (size_t t = 0; t < n; ++t) {
    x[t] *= 1.0 - depth * 0.5 * (1.0 + std::sin(kTwoPi * fm * t / rate + pm));
  }

  peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double level = UniformIn(rng, 0.3, 0.6);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (size_t t = 0; t < n; ++t) {
    const double v = peak > 0 ? x[t] * level / peak : 0.0;
    w.samples[t] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return w;
}

Waveform SynthNoise(const CorpusConfig& cfg, uint64_t index, int64_t length) {
  std::mt19937_64 rng(MixSeed(cfg.seed, 0xbacc, index));
  std::vector<double> x(static_cast<size_t>(length), 0.0);
  AddBandNoise(x, rng, 50.0, 0.45 * cfg.sample_rate, 1.0, cfg.sample_rate);
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(x.size());
  for (size_t t = 0; t < x.size(); ++t) {
    w.samples[t] = static_cast<float>(peak > 0 ? 0.5 * x[t] / peak : 0.0);
  }
  return w;
}

MixResult Mix(const std::vector<Waveform>& sources, double snr_db, const Waveform* noise,
              double noise_snr_db) {
  if (sources.size() < 2) throw InvalidArgument("mix needs at least two sources");
  const size_t n = sources[0].size();
  const int rate = sources[0].sample_rate;
  for (size_t i = 0; i < sources.size(); ++i) {
    sources[i].Validate();
    if (sources[i].size() != n) throw InvalidArgument("mix: sources differ in length");
    if (sources[i].sample_rate != rate) throw InvalidArgument("mix: sources differ in rate");
    if (Energy(sources[i].samples) <= 0) {
      throw InvalidArgument("mix: source " + std::to_string(i + 1) + " has zero energy");
    }
  }
  if (noise && (noise->size() != n || Energy(noise->samples) <= 0)) {
    throw InvalidArgument("mix: noise must match the source length and be non-silent");
  }

  MixResult r;
  const double e1 = Energy(sources[0].samples);
  r.source_gain = std::sqrt(e1 / (Energy(sources[1].samples) * std::pow(10.0, snr_db / 10.0)));
  std::vector<std::vector<double>> parts(sources.size(), std::vector<double>(n));
  for (size_t i = 0; i < sources.size(); ++i) {
    const double g = i == 1 ? r.source_gain : 1.0;
    for (size_t t = 0; t < n; ++t) parts[i][t] = g * sources[i].samples[t];
  }
  if (noise) {
    double loudest = 0;
    for (const auto& p : parts) loudest = std::max(loudest, Energy(p));
    const double g =
        std::sqrt(loudest / (Energy(noise->samples) * std::pow(10.0, noise_snr_db / 10.0)));
    std::vector<double> np(n);
    for (size_t t = 0; t < n; ++t) np[t] = g * noise->samples[t];
    parts.push_back(std::move(np));
  }

  double peak = 0;
  for (size_t t = 0; t < n; ++t) {
    double s = 0;
    for (const auto& p : parts) s += p[t];
    peak = std::max(peak, std::abs(s));
  }
  if (peak > kClipPeak) r.peak_gain = kNormPeak / peak;

  std::vector<std::vector<int16_t>> pcm(parts.size(), std::vector<int16_t>(n));
  std::vector<int16_t> mix(n);
  for (size_t t = 0; t < n; ++t) {
    int32_t acc = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
      pcm[i][t] = QuantizeSample(parts[i][t] * r.peak_gain);
      acc += pcm[i][t];
    }
    mix[t] = static_cast<int16_t>(std::clamp<int32_t>(acc, -32768, 32767));
  }
  for (size_t i = 0; i < sources.size(); ++i) r.sources.push_back(FromPcm(pcm[i], rate));
  if (noise) r.noise = FromPcm(pcm.back(), rate);
  r.mixture = FromPcm(mix, rate);
  return r;
}

const std::vector<std::string>& SplitNames() {
  static const std::vector<std::string> names{"train", "valid", "test"};
  return names;
}

std::string SplitName(Split s) { return SplitNames()[static_cast<int>(s)]; }

Split ParseSplit(const std::string& name) {
  const auto& names = SplitNames();
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Split>(i);
  }
  throw InvalidArgument("unknown split '" + name + "'; valid splits: train, valid, test");
}

SpeakerSplit AssignSpeakers(const CorpusConfig& cfg) {
  SpeakerSplit out;
  const int per_family = cfg.n_speakers_pool / 2;
  const int n_test = std::max(1, static_cast<int>(std::lround(per_family / 6.0)));
  const int n_valid = n_test;
  const int n_train = per_family - n_test - n_valid;
  if (n_train < 1) throw ConfigError("invalid config key 'corpus.n_speakers_pool': too small");
  for (int family = 0; family < 2; ++family) {
    for (int k = 0; k < per_family; ++k) {
      const int id = 2 * k + family;
      if (k < n_train) {
        out.train.push_back(id);
      } else if (k < n_train + n_valid) {
        out.valid.push_back(id);
      } else {
        out.test.push_back(id);
      }
    }
  }
  return out;
}

namespace {

json RecordToJson(const MixtureRecord& r) {
  json j;
  j["id"] = r.id;
  j["split"] = SplitName(r.split);
  j["mixture_path"] = r.mixture_path;
  j["source_paths"] = r.source_paths;
  j["snr_db"] = r.snr_db;
  j["noise_path"] = r.noise_path ? json(*r.noise_path) : json(nullptr);
  j["noise_snr_db"] = r.noise_snr_db ? json(*r.noise_snr_db) : json(nullptr);
  j["speakers"] = r.speakers;
  return j;
}

}  // namespace

std::string MakeCorpus(const CorpusConfig& cfg, const std::string& out_dir, bool force) {
  cfg.Validate();
  const fs::path root(out_dir);
  const fs::path manifest = root / "manifest.jsonl";
  if (fs::exists(manifest) && !force) {
    throw InvalidArgument("manifest already exists at '" + manifest.string() +
                          "'; pass --force to overwrite");
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());

  const auto speakers = MakeSpeakers(cfg);
  const auto assignment = AssignSpeakers(cfg);
  const std::vector<std::pair<Split, int>> plan{
      {Split::kTrain, cfg.n_train}, {Split::kValid, cfg.n_valid}, {Split::kTest, cfg.n_test}};

  std::vector<MixtureRecord> records;
  uint64_t utterance = 0;
  for (const auto& [split, count] : plan) {
    const auto& pool = split == Split::kTrain   ? assignment.train
                       : split == Split::kValid ? assignment.valid
                                                : assignment.test;
    std::vector<int> low, high;
    for (int id : pool) (speakers[id].family == 0 ? low : high).push_back(id);
    const std::string sname = SplitName(split);
    for (const char* sub : {"mix", "s1", "s2", "noise"}) {
      if (std::string(sub) == "noise" && !cfg.noise) continue;
      fs::create_directories(root / sname / sub, ec);
      if (ec) throw IoError("cannot create directory under '" + root.string() + "'");
    }
    std::mt19937_64 rng(MixSeed(cfg.seed, 0x3a11, static_cast<uint64_t>(split)));
    for (int i = 0; i < count; ++i) {
      const int a = low[rng() % low.size()];
      const int b = high[rng() % high.size()];
      const bool swap = (rng() & 1) != 0;
      const int first = swap ? b : a;
      const int second = swap ? a : b;
      const double snr = UniformIn(rng, cfg.snr_lo, cfg.snr_hi);
      const double noise_snr = UniformIn(rng, cfg.noise_snr_lo, cfg.noise_snr_hi);

      std::vector<Waveform> src{SynthUtterance(speakers[first], cfg, utterance),
                                SynthUtterance(speakers[second], cfg, utterance + 1)};
      const size_t len = std::min(src[0].size(), src[1].size());
      for (auto& s : src) s.samples.resize(len);
      std::optional<Waveform> noise;
      if (cfg.noise) noise = SynthNoise(cfg, utterance, static_cast<int64_t>(len));
      utterance += 2;
      MixResult m = Mix(src, snr, noise ? &*noise : nullptr, noise_snr);

      char id[32];
      std::snprintf(id, sizeof(id), "%s_%04d", sname.c_str(), i);
      MixtureRecord r;
      r.id = id;
      r.split = split;
      r.snr_db = snr;
      r.speakers = {first, second};
      auto rel = [&](const char* sub) { return sname + "/" + sub + "/" + r.id + ".wav"; };
      r.mixture_path = rel("mix");
      r.source_paths = {rel("s1"), rel("s2")};
      WriteWavPcm16((root / r.mixture_path).string(), ToPcm(m.mixture), cfg.sample_rate);
      for (int k = 0; k < 2; ++k) {
        WriteWavPcm16((root / r.source_paths[k]).string(), ToPcm(m.sources[k]), cfg.sample_rate);
      }
      if (m.noise) {
        r.noise_path = rel("noise");
        r.noise_snr_db = noise_snr;
        WriteWavPcm16((root / *r.noise_path).string(), ToPcm(*m.noise), cfg.sample_rate);
      }
      records.push_back(std::move(r));
    }
  }

  const fs::path tmp = root / "manifest.jsonl.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    for (const auto& r : records) out << RecordToJson(r).dump() << '\n';
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, manifest, ec);
  if (ec) throw IoError("cannot finalize '" + manifest.string() + "': " + ec.message());
  SS_LOG_INFO << "wrote " << records.size() << " records to " << manifest.string();
  return manifest.string();
}

std::vector<MixtureRecord> LoadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return (q.is_absolute() ? q : base / q).lexically_normal().string();
  };
  std::vector<MixtureRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      MixtureRecord r;
      r.id = j.at("id").get<std::string>();
      r.split = ParseSplit(j.at("split").get<std::string>());
      r.mixture_path = resolve(j.at("mixture_path").get<std::string>());
      for (const auto& p : j.at("source_paths")) {
        r.source_paths.push_back(resolve(p.get<std::string>()));
      }
      r.snr_db = j.at("snr_db").get<double>();
      if (j.contains("noise_path") && !j["noise_path"].is_null()) {
        r.noise_path = resolve(j["noise_path"].get<std::string>());
      }
      if (j.contains("noise_snr_db") && !j["noise_snr_db"].is_null()) {
        r.noise_snr_db = j["noise_snr_db"].get<double>();
      }
      if (j.contains("speakers")) r.speakers = j["speakers"].get<std::vector<int>>();
      if (r.source_paths.size() < 2) throw InvalidArgument("needs at least two sources");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw InvalidArgument("malformed manifest row at " + where + ": " + e.what());
    } catch (const Error& e) {
      throw InvalidArgument("malformed manifest row at " + where + ": " + e.what());
    }
  }
  return out;
}

std::vector<MixtureRecord> FilterSplit(const std::vector<MixtureRecord>& records, Split split) {
  std::vector<MixtureRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

LoadedRecord LoadRecord(const MixtureRecord& record, int expected_rate) {
  LoadedRecord r;
  r.mixture = ReadWav(record.mixture_path, expected_rate);
  for (const auto& p : record.source_paths) r.sources.push_back(ReadWav(p, expected_rate));
  if (record.noise_path) r.noise = ReadWav(*record.noise_path, expected_rate);
  size_t len = r.mixture.size();
  for (const auto& s : r.sources) len = std::min(len, s.size());
  if (r.noise) len = std::min(len, r.noise->size());
  r.mixture.samples.resize(len);
  for (auto& s : r.sources) s.samples.resize(len);
  if (r.noise) r.noise->samples.resize(len);
  return r;
}

std::vector<Segment> TrainingSegments(const LoadedRecord& record, int64_t segment_len,
                                      const std::string& record_id) {
  if (segment_len < 1) throw InvalidArgument("segment length must be positive");
  const auto n = static_cast<int64_t>(record.mixture.size());
  std::vector<Segment> out;
  if (n < segment_len) {
    SS_LOG_WARN << "skipping " << (record_id.empty() ? "record" : record_id) << ": " << n
                << " samples is shorter than one " << segment_len << "-sample segment";
    return out;
  }
  for (int64_t start = 0; start + segment_len <= n; start += segment_len) {
    auto cut = [&](const std::vector<float>& v) {
      return std::vector<float>(v.begin() + start, v.begin() + start + segment_len);
    };
    Segment s;
    s.mixture = cut(record.mixture.samples);
    for (const auto& src : record.sources) s.targets.push_back(cut(src.samples));
    if (record.noise) s.noise = cut(record.noise->samples);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace stepsep::data
