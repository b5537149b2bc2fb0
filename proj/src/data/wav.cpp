// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/wav.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "common/error.h"

namespace stepsep::data {

namespace {

uint32_t U32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}
uint16_t U16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void Put32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void Put16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

int16_t QuantizeSample(double x) {
  const double q = std::nearbyint(x * 32768.0);
  return static_cast<int16_t>(std::clamp(q, -32768.0, 32767.0));
}

Waveform ReadWav(const std::string& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) {
    return IoError("bad WAV header in '" + path + "': " + why);
  };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw bad("not a RIFF/WAVE file");
  }
  size_t pos = 12;
  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  while (pos + 8 <= buf.size()) {
    const uint32_t size = U32(&buf[pos + 4]);
    const size_t body = pos + 8;
    if (body + size > buf.size()) throw bad("truncated chunk");
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      if (size < 16) throw bad("short fmt chunk");
      format = U16(&buf[body]);
      channels = U16(&buf[body + 2]);
      rate = U32(&buf[body + 4]);
      bits = U16(&buf[body + 14]);
      have_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      data = &buf[body];
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw bad("missing fmt chunk");
  if (!data) throw bad("missing data chunk");
  if (format != 1) throw IoError("'" + path + "': only PCM WAV is supported");
  if (channels != 1) {
    throw IoError("'" + path + "': mono required, file has " + std::to_string(channels) +
                  " channels");
  }
  if (bits != 16) {
    throw IoError("'" + path + "': unsupported bit depth " + std::to_string(bits) +
                  " (16-bit required)");
  }
  if (rate == 0) throw bad("zero sample rate");
  if (expected_rate > 0 && static_cast<int>(rate) != expected_rate) {
    throw InvalidArgument("'" + path + "': sample rate " + std::to_string(rate) +
                          " Hz does not match expected " + std::to_string(expected_rate) +
                          " Hz");
  }
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(data_size / 2);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = DequantizeSample(static_cast<int16_t>(U16(data + 2 * i)));
  }
  return w;
}

void WriteWavPcm16(const std::string& path, const std::vector<int16_t>& pcm, int sample_rate) {
  if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  const uint32_t data_bytes = static_cast<uint32_t>(pcm.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  Put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  Put32(s, 16);
  Put16(s, 1);
  Put16(s, 1);
  Put32(s, static_cast<uint32_t>(sample_rate));
  Put32(s, static_cast<uint32_t>(sample_rate) * 2);
  Put16(s, 2);
  Put16(s, 16);
  s += "data";
  Put32(s, data_bytes);
  for (int16_t v : pcm) Put16(s, static_cast<uint16_t>(v));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void WriteWav(const std::string& path, const Waveform& w) {
  w.Validate();
  std::vector<int16_t> pcm(w.samples.size());
  std::transform(w.samples.begin(), w.samples.end(), pcm.begin(),
                 [](float x) { return QuantizeSample(x); });
  WriteWavPcm16(path, pcm, w.sample_rate);
}

}  // namespace stepsep::data
