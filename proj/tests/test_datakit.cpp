// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "common/error.h"
#include "data/corpus.h"
#include "data/wav.h"
#include "test_util.h"

namespace stepsep::data {
namespace {

using testing::TempDir;

double Energy(const std::vector<float>& x) {
  double e = 0;
  for (float v : x) e += static_cast<double>(v) * v;
  return e;
}

Waveform Tone(double freq, double amp, int n, int rate = 8000) {
  Waveform w;
  w.sample_rate = rate;
  for (int t = 0; t < n; ++t) {
    w.samples.push_back(static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * t / rate)));
  }
  return w;
}

std::string Header(uint16_t format, uint16_t channels, uint32_t rate, uint16_t bits,
                   uint32_t data_bytes) {
  std::string s = "RIFF";
  auto put32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto put16 = [&](uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
  };
  put32(36 + data_bytes);
  s += "WAVEfmt ";
  put32(16);
  put16(format);
  put16(channels);
  put32(rate);
  put32(rate * channels * bits / 8);
  put16(channels * bits / 8);
  put16(bits);
  s += "data";
  put32(data_bytes);
  s.append(data_bytes, '\0');
  return s;
}

std::string ErrorOf(const std::string& path, int rate = 0) {
  try {
    ReadWav(path, rate);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(Wav, RoundTripWithinQuantization) {
  TempDir dir("wav");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Waveform w;
  for (int i = 0; i < 5000; ++i) w.samples.push_back(static_cast<float>(u(rng)));
  WriteWav(dir / "a.wav", w);
  auto r = ReadWav(dir / "a.wav", 8000);
  ASSERT_EQ(r.size(), w.size());
  EXPECT_EQ(r.sample_rate, 8000);
  for (size_t i = 0; i < w.size(); ++i) {
    EXPECT_LE(std::abs(r.samples[i] - w.samples[i]), 2.0 / 65536);
  }
  // Grid values survive exactly.
  WriteWav(dir / "b.wav", r);
  EXPECT_EQ(ReadWav(dir / "b.wav").samples, r.samples);
}

TEST(Wav, RejectsUnsupportedFiles) {
  TempDir dir("wavbad");
  testing::WriteFile(dir / "stereo.wav", Header(1, 2, 8000, 16, 8));
  EXPECT_NE(ErrorOf(dir / "stereo.wav").find("mono required"), std::string::npos);
  testing::WriteFile(dir / "b24.wav", Header(1, 1, 8000, 24, 6));
  EXPECT_NE(ErrorOf(dir / "b24.wav").find("unsupported bit depth 24"), std::string::npos);
  testing::WriteFile(dir / "float.wav", Header(3, 1, 8000, 32, 8));
  EXPECT_NE(ErrorOf(dir / "float.wav").find("only PCM"), std::string::npos);
  testing::WriteFile(dir / "junk.wav", "hello world, not a wav");
  EXPECT_NE(ErrorOf(dir / "junk.wav").find("bad WAV header"), std::string::npos);
  std::string truncated = Header(1, 1, 8000, 16, 100);
  truncated.resize(60);
  testing::WriteFile(dir / "trunc.wav", truncated);
  EXPECT_NE(ErrorOf(dir / "trunc.wav").find("bad WAV header"), std::string::npos);
  testing::WriteFile(dir / "cd.wav", Header(1, 1, 44100, 16, 8));
  const auto msg = ErrorOf(dir / "cd.wav", 8000);
  EXPECT_NE(msg.find("44100"), std::string::npos);
  EXPECT_NE(msg.find("8000"), std::string::npos);
  EXPECT_NE(ErrorOf(dir / "missing.wav").find("cannot open"), std::string::npos);
}

TEST(Mix, EqualEnergyAtZeroDbIsNotRescaled) {
  auto a = Tone(300, 0.3, 800);
  auto b = a;
  for (size_t t = 1; t < b.size(); t += 2) b.samples[t] = -b.samples[t];
  auto m = Mix({a, b}, 0.0);
  EXPECT_EQ(m.source_gain, 1.0);
  EXPECT_EQ(m.peak_gain, 1.0);
}

TEST(Mix, SnrDefinition) {
  auto a = Tone(300, 0.3, 8000);
  auto b = Tone(1500, 0.2, 8000);
  for (double snr : {-3.0, 0.0, 5.0}) {
    auto m = Mix({a, b}, snr);
    const double e1 = Energy(a.samples);
    const double e2 = Energy(b.samples) * m.source_gain * m.source_gain;
    EXPECT_NEAR(e2, e1 / std::pow(10.0, snr / 10.0), 1e-9 * e1);
    // Stored references carry the gains up to int16 rounding.
    EXPECT_NEAR(10 * std::log10(Energy(m.sources[0].samples) / Energy(m.sources[1].samples)), snr,
                1e-3);
  }
}

TEST(Mix, MixtureIsExactSumOfStoredParts) {
  CorpusConfig cfg;
  cfg.noise = true;
  auto sp = MakeSpeakers(cfg);
  auto a = SynthUtterance(sp[0], cfg, 0);
  auto b = SynthUtterance(sp[1], cfg, 1);
  const auto noise = SynthNoise(cfg, 0, static_cast<int64_t>(a.size()));
  for (const Waveform* n : {static_cast<const Waveform*>(nullptr), &noise}) {
    auto m = Mix({a, b}, 2.5, n, -3.0);
    for (size_t t = 0; t < a.size(); ++t) {
      double s = static_cast<double>(m.sources[0].samples[t]) + m.sources[1].samples[t];
      if (m.noise) s += m.noise->samples[t];
      ASSERT_LE(std::abs(m.mixture.samples[t] - s), 1e-9);
    }
  }
}

TEST(Mix, PeakNormalizationAppliesToEverything) {
  auto a = Tone(300, 0.9, 800);
  auto b = Tone(300, 0.9, 800);
  auto m = Mix({a, b}, 0.0);
  EXPECT_LT(m.peak_gain, 1.0);
  float peak = 0;
  for (float v : m.mixture.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.9, 1e-3);
  EXPECT_NEAR(m.sources[0].samples[20], m.peak_gain * a.samples[20], 1.0 / 32768);
}

TEST(Mix, Errors) {
  auto a = Tone(300, 0.3, 800);
  Waveform silent{std::vector<float>(800, 0.0f), 8000};
  EXPECT_THROW(Mix({a, silent}, 0.0), InvalidArgument);
  EXPECT_THROW(Mix({a, Tone(300, 0.3, 700)}, 0.0), InvalidArgument);
}

TEST(Synth, DeterministicAndBounded) {
  CorpusConfig cfg;
  auto sp = MakeSpeakers(cfg);
  for (int id : {0, 1, 7}) {
    auto x = SynthUtterance(sp[id], cfg, 42);
    EXPECT_EQ(x.samples, SynthUtterance(sp[id], cfg, 42).samples);
    EXPECT_NE(x.samples, SynthUtterance(sp[id], cfg, 43).samples);
    EXPECT_EQ(x.size(), 8000u);
    for (float v : x.samples) ASSERT_LE(std::abs(v), 1.0f);
  }
}

// Magnitude-spectrum centroid by direct DFT.
double Centroid(const std::vector<float>& x, int rate) {
  const int n = static_cast<int>(x.size());
  double num = 0, den = 0;
  for (int k = 1; k < n / 2; ++k) {
    double re = 0, im = 0;
    for (int t = 0; t < n; ++t) {
      const double ph = 2 * std::numbers::pi * k * t / n;
      re += x[t] * std::cos(ph);
      im -= x[t] * std::sin(ph);
    }
    const double mag = std::hypot(re, im);
    num += mag * k * rate / static_cast<double>(n);
    den += mag;
  }
  return num / den;
}

TEST(Synth, SpeakerFamiliesAreSpectrallyDistinct) {
  CorpusConfig cfg;
  auto sp = MakeSpeakers(cfg);
  std::vector<double> low, high;
  for (const auto& s : sp) {
    auto x = SynthUtterance(s, cfg, 3).samples;
    x.resize(1024);
    (s.family == 0 ? low : high).push_back(Centroid(x, cfg.sample_rate));
  }
  for (double l : low) {
    EXPECT_GT(l, 100.0);
    EXPECT_LT(l, 900.0);
    for (double h : high) EXPECT_GT(h - l, 300.0);
  }
}

TEST(Corpus, DefaultManifestSplitsAndDeterminism) {
  TempDir a("corpus_a"), b("corpus_b");
  CorpusConfig cfg;
  const auto ma = MakeCorpus(cfg, a / "out", false);
  const auto mb = MakeCorpus(cfg, b / "out", false);
  const auto bytes = testing::ReadFile(ma);
  EXPECT_EQ(bytes, testing::ReadFile(mb));
  EXPECT_EQ(testing::ReadFile(a / "out/test/mix/test_0003.wav"),
            testing::ReadFile(b / "out/test/mix/test_0003.wav"));

  auto rows = LoadManifest(ma);
  ASSERT_EQ(rows.size(), 280u);
  EXPECT_EQ(FilterSplit(rows, Split::kTrain).size(), 200u);
  EXPECT_EQ(FilterSplit(rows, Split::kValid).size(), 40u);
  EXPECT_EQ(FilterSplit(rows, Split::kTest).size(), 40u);

  std::set<int> train, valid, test;
  for (const auto& r : rows) {
    auto& s = r.split == Split::kTrain ? train : r.split == Split::kValid ? valid : test;
    s.insert(r.speakers.begin(), r.speakers.end());
    EXPECT_GE(r.snr_db, cfg.snr_lo);
    EXPECT_LE(r.snr_db, cfg.snr_hi);
  }
  for (int s : test) {
    EXPECT_FALSE(train.count(s));
    EXPECT_FALSE(valid.count(s));
  }
  for (int s : valid) EXPECT_FALSE(train.count(s));

  // Paths are stored relative to the manifest.
  const auto first = nlohmann::json::parse(bytes.substr(0, bytes.find('\n')));
  EXPECT_EQ(first["mixture_path"], "train/mix/train_0000.wav");

  EXPECT_THROW(MakeCorpus(cfg, a / "out", false), InvalidArgument);
  EXPECT_NO_THROW(MakeCorpus(cfg, a / "out", true));
  EXPECT_EQ(testing::ReadFile(ma), bytes);
}

TEST(Corpus, RecordsMixExactlyAndSegment) {
  TempDir dir("corpus_noise");
  CorpusConfig cfg;
  cfg.n_train = 3;
  cfg.n_valid = 1;
  cfg.n_test = 1;
  cfg.noise = true;
  cfg.duration_s = 2.5;
  auto rows = LoadManifest(MakeCorpus(cfg, dir / "c", false));
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& row : rows) {
    ASSERT_TRUE(row.noise_path);
    auto rec = LoadRecord(row, 8000);
    for (size_t t = 0; t < rec.mixture.size(); ++t) {
      const double s = static_cast<double>(rec.sources[0].samples[t]) + rec.sources[1].samples[t] +
                       rec.noise->samples[t];
      ASSERT_LE(std::abs(rec.mixture.samples[t] - s), 1e-9);
    }
    auto segs = TrainingSegments(rec, 8000, row.id);
    ASSERT_EQ(segs.size(), 2u);
    for (const auto& seg : segs) {
      for (size_t t = 0; t < seg.mixture.size(); ++t) {
        const double s = static_cast<double>(seg.targets[0][t]) + seg.targets[1][t] + seg.noise[t];
        ASSERT_LE(std::abs(seg.mixture[t] - s), 1e-9);
      }
    }
  }
}

TEST(Segments, CountsAndShortRecords) {
  LoadedRecord rec;
  rec.mixture.samples.assign(5 * 8000, 0.1f);
  rec.sources.assign(2, rec.mixture);
  EXPECT_EQ(TrainingSegments(rec, 2 * 8000).size(), 2u);
  rec.mixture.samples.resize(2 * 8000);
  for (auto& s : rec.sources) s.samples.resize(2 * 8000);
  EXPECT_EQ(TrainingSegments(rec, 2 * 8000).size(), 1u);
  rec.mixture.samples.resize(8000);
  for (auto& s : rec.sources) s.samples.resize(8000);
  EXPECT_TRUE(TrainingSegments(rec, 2 * 8000, "short").empty());
}

TEST(Corpus, SplitNamesAndConfigErrors) {
  EXPECT_EQ(ParseSplit("valid"), Split::kValid);
  try {
    ParseSplit("dev");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("train, valid, test"), std::string::npos);
  }
  CorpusConfig bad;
  bad.snr_lo = 5;
  bad.snr_hi = 0;
  try {
    bad.Validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("corpus.snr_range"), std::string::npos);
  }
}

TEST(Manifest, MalformedRowsNameTheLine) {
  TempDir dir("manifest");
  testing::WriteFile(dir / "m.jsonl", "{\"id\": \"x\"}\n");
  try {
    LoadManifest(dir / "m.jsonl");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("m.jsonl:1"), std::string::npos);
  }
  EXPECT_THROW(LoadManifest(dir / "none.jsonl"), IoError);
}

}  // namespace
}  // namespace stepsep::data
