// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "train/checkpoint.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "common/error.h"

namespace stepsep::train {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'S', 'C', 'K'};

uint64_t Fnv1a(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename V>
void PutRaw(std::string& out, const V& v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

void PutFloats(std::string& out, const std::vector<float>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <typename V>
  V Get() {
    V v;
    Need(sizeof(V));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string GetString(size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> GetFloats(size_t n) {
    Need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  size_t pos() const { return pos_; }

 private:
  void Need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint '" + path_ + "' is truncated");
  }
  const std::string& bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void SaveCheckpoint(const std::string& path, const model::Model<float>& model,
                    const Adam<float>* optimizer, const CheckpointState& state) {
  const auto& entries = model.params().entries();
  json header;
  header["model"] = ToJson(model.config());
  header["init_seed"] = model.init_seed();
  header["run"] = state.run_config;
  header["epoch"] = state.epoch;
  header["step"] = state.step;
  header["best_valid"] = state.has_best ? json(state.best_valid) : json(nullptr);
  header["rng_state"] = state.rng_state;
  header["optimizer"] = optimizer ? json(optimizer->steps()) : json(nullptr);
  json params = json::array();
  for (const auto& [name, v] : entries) params.push_back({{"name", name}, {"shape", v.shape()}});
  header["params"] = params;

  std::string out(kMagic, 4);
  PutRaw(out, kCheckpointVersion);
  const std::string text = header.dump();
  PutRaw(out, static_cast<uint64_t>(text.size()));
  out += text;
  for (const auto& e : entries) {
    PutFloats(out, std::vector<float>(e.second.value().begin(), e.second.value().end()));
  }
  if (optimizer) {
    for (const auto& m : optimizer->first_moments()) PutFloats(out, m);
    for (const auto& v : optimizer->second_moments()) PutFloats(out, v);
  }
  PutRaw(out, Fnv1a(out));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint '" + tmp + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for checkpoint '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot finalize checkpoint '" + path + "': " + ec.message());
}

LoadedCheckpoint LoadCheckpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("'" + path + "' is not a stepsep checkpoint");
  }
  uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  if (Fnv1a(bytes.substr(0, bytes.size() - 8)) != stored_sum) {
    throw IoError("checkpoint '" + path + "' is corrupt (checksum mismatch)");
  }
  Reader r(bytes, path);
  r.GetString(4);
  const auto version = r.Get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                  ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = r.Get<uint64_t>();
  json header;
  try {
    header = json::parse(r.GetString(header_len));
  } catch (const json::exception& e) {
    throw IoError("checkpoint '" + path + "' has a malformed header: " + e.what());
  }

  LoadedCheckpoint c;
  c.model_config = ModelConfigFromJson(header.at("model"));
  c.init_seed = header.at("init_seed").get<uint64_t>();
  c.state.run_config = header.at("run");
  c.state.epoch = header.at("epoch").get<int>();
  c.state.step = header.at("step").get<int64_t>();
  c.state.has_best = !header.at("best_valid").is_null();
  if (c.state.has_best) c.state.best_valid = header["best_valid"].get<double>();
  c.state.rng_state = header.at("rng_state").get<std::string>();

  std::vector<int64_t> sizes;
  for (const auto& p : header.at("params")) {
    sizes.push_back(ag::NumElements(p.at("shape").get<ag::Shape>()));
  }
  for (int64_t n : sizes) c.params.push_back(r.GetFloats(static_cast<size_t>(n)));
  if (!header.at("optimizer").is_null()) {
    c.has_optimizer = true;
    c.adam_steps = header["optimizer"].get<int64_t>();
    for (int64_t n : sizes) c.adam_m.push_back(r.GetFloats(static_cast<size_t>(n)));
    for (int64_t n : sizes) c.adam_v.push_back(r.GetFloats(static_cast<size_t>(n)));
  }
  if (r.pos() + 8 != bytes.size()) throw IoError("checkpoint '" + path + "' has trailing data");

  // Verify names and shapes against a freshly built model.
  auto probe = std::make_unique<model::Model<float>>(c.model_config, c.init_seed);
  const auto& entries = probe->params().entries();
  const auto& names = header["params"];
  if (entries.size() != names.size()) {
    throw IoError("checkpoint '" + path + "' does not match its architecture");
  }
  for (size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].first != names[k].at("name").get<std::string>() ||
        entries[k].second.shape() != names[k].at("shape").get<ag::Shape>()) {
      throw IoError("checkpoint '" + path + "': parameter '" + entries[k].first +
                    "' does not match the stored layout");
    }
  }
  return c;
}

std::unique_ptr<model::Model<float>> LoadedCheckpoint::BuildModel() const {
  auto m = std::make_unique<model::Model<float>>(model_config, init_seed);
  auto& entries = m->params().entries();
  for (size_t k = 0; k < entries.size(); ++k) {
    auto dst = entries[k].second.mutable_value();
    std::copy(params[k].begin(), params[k].end(), dst.begin());
  }
  return m;
}

void LoadedCheckpoint::RestoreOptimizer(Adam<float>& optimizer) const {
  if (!has_optimizer) throw IoError("checkpoint has no optimizer state to resume from");
  optimizer.set_steps(adam_steps);
  optimizer.first_moments() = adam_m;
  optimizer.second_moments() = adam_v;
}

}  // namespace stepsep::train
