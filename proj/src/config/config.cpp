// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "config/config.h"

#include <cctype>
#include <cmath>
#include <set>

#include "common/error.h"

namespace stepsep {

using nlohmann::json;

namespace {

void Require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("invalid config key '" + key + "': " + what);
}

// Reads typed fields out of one JSON object and rejects anything it did not
// consume.
class SectionReader {
 public:
  SectionReader(const json& obj, std::string section)
      : obj_(obj), section_(std::move(section)) {
    if (!obj_.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
  }

  template <typename V>
  void Get(const char* key, V& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const json::exception&) {
      throw ConfigError("invalid config key '" + Path(key) + "': wrong type");
    }
  }

  const json* Raw(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string Path(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

  void Finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + Path(it.key()) + "'");
    }
  }

 private:
  const json& obj_;
  std::string section_;
  std::set<std::string> seen_;
};

const std::vector<std::pair<VariantKind, std::string>>& VariantNames() {
  static const std::vector<std::pair<VariantKind, std::string>> names = {
      {VariantKind::kBase, "BASE"},
      {VariantKind::kBaseExpanded, "BASE_EXPANDED"},
      {VariantKind::kBaseDeeper, "BASE_DEEPER"},
      {VariantKind::kBaseHighOrder, "BASE_HIGH_ORDER"},
      {VariantKind::kIterative, "ITERATIVE"},
      {VariantKind::kSrssn1D, "SRSSN_1D"},
      {VariantKind::kSrssn1DExpanded, "SRSSN_1D_EXPANDED"},
      {VariantKind::kSrssnLrOnly, "SRSSN_LR_ONLY"},
      {VariantKind::kSrssn, "SRSSN"},
  };
  return names;
}

bool IsOnePhase(VariantKind k) {
  return k == VariantKind::kBase || k == VariantKind::kBaseExpanded ||
         k == VariantKind::kBaseDeeper || k == VariantKind::kBaseHighOrder;
}

}  // namespace

void CodecConfig::Validate() const {
  Require(n_coarse_basis > 0, "codec.n_coarse_basis", "must be positive");
  Require(coarse_kernel > 0, "codec.coarse_kernel", "must be positive");
  Require(coarse_stride > 0 && coarse_stride <= coarse_kernel, "codec.coarse_stride",
          "must be in [1, coarse_kernel]");
  Require(n_fine_basis > 0, "codec.n_fine_basis", "must be positive");
  Require(fine_kernel > 0, "codec.fine_kernel", "must be positive");
  Require(fine_stride > 0 && fine_stride <= fine_kernel, "codec.fine_stride",
          "must be in [1, fine_kernel]");
  Require(n_groups > 0, "codec.n_groups", "must be positive");
  Require(n_coarse_basis % n_groups == 0, "codec.n_groups",
          "n_coarse_basis must be divisible by n_groups");
  Require(depth >= 1 && depth <= 8, "codec.depth", "must be in [1, 8]");
}

void SeparatorConfig::Validate() const {
  Require(n_blocks >= 1, "separator.n_blocks", "must be >= 1");
  Require(chunk_len >= 2 && chunk_len % 2 == 0, "separator.chunk_len",
          "must be a positive even number");
  Require(inner_dim > 0, "separator.inner_dim", "must be positive");
  Require(rnn_hidden > 0, "separator.rnn_hidden", "must be positive");
  Require(attn_heads > 0 && inner_dim % attn_heads == 0, "separator.attn_heads",
          "must divide inner_dim");
  Require(n_sources >= 2, "separator.n_sources", "must be >= 2");
  Require(in_dim > 0, "separator.in_dim", "must be positive");
}

void TrainConfig::Validate() const {
  Require(lr > 0, "train.lr", "must be positive");
  Require(weight_decay >= 0, "train.weight_decay", "must be non-negative");
  Require(grad_clip > 0 && std::isfinite(grad_clip), "train.grad_clip",
          "must be positive and finite");
  Require(epochs >= 1, "train.epochs", "must be >= 1");
  Require(batch_size >= 1, "train.batch_size", "must be >= 1");
  Require(segment_s > 0, "train.segment_s", "must be positive");
  Require(max_steps >= 0, "train.max_steps", "must be non-negative");
  Require(log_every >= 0, "train.log_every", "must be non-negative");
  Require(blocks_per_phase >= 0, "train.blocks_per_phase", "must be non-negative");
}

void CorpusConfig::Validate(int min_samples) const {
  Require(n_speakers_pool >= 6, "corpus.n_speakers_pool", "must be >= 6");
  Require(n_train >= 0 && n_valid >= 0 && n_test >= 0, "corpus.n_train",
          "split sizes must be non-negative");
  Require(sample_rate > 0, "corpus.sample_rate", "must be positive");
  Require(duration_s > 0, "corpus.duration_s", "must be positive");
  Require(duration_s * sample_rate >= min_samples, "corpus.duration_s",
          "utterances shorter than one encoder window");
  Require(std::isfinite(snr_lo) && std::isfinite(snr_hi) && snr_lo <= snr_hi,
          "corpus.snr_range", "lower bound must not exceed upper bound");
  Require(std::isfinite(noise_snr_lo) && std::isfinite(noise_snr_hi) &&
              noise_snr_lo <= noise_snr_hi,
          "corpus.noise_snr_range", "lower bound must not exceed upper bound");
}

void RunConfig::Validate() const {
  codec.Validate();
  separator.Validate();
  train.Validate();
  corpus.Validate(codec.coarse_kernel);
  Require(ablation.n_seeds >= 1, "ablation.n_seeds", "must be >= 1");
  // Resolving catches bad variant overrides before any work starts.
  ResolveModelConfig(*this);
}

const std::vector<VariantKind>& AllVariants() {
  static const std::vector<VariantKind> all = [] {
    std::vector<VariantKind> v;
    for (const auto& [k, _] : VariantNames()) v.push_back(k);
    return v;
  }();
  return all;
}

std::string VariantName(VariantKind kind) {
  for (const auto& [k, n] : VariantNames()) {
    if (k == kind) return n;
  }
  throw ConfigError("unknown variant");
}

VariantKind ParseVariant(const std::string& name) {
  std::string upper;
  for (char c : name) upper.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(c)));
  for (const auto& [k, n] : VariantNames()) {
    if (n == upper) return k;
  }
  std::string valid;
  for (const auto& [k, n] : VariantNames()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown variant '" + name + "' (valid: " + valid + ")");
}

std::string BlockKindName(BlockKind kind) {
  return kind == BlockKind::kDprnn ? "DPRNN" : "DPTNET";
}

BlockKind ParseBlockKind(const std::string& name) {
  std::string upper;
  for (char c : name) upper.push_back(static_cast<char>(std::toupper(c)));
  if (upper == "DPRNN") return BlockKind::kDprnn;
  if (upper == "DPTNET") return BlockKind::kDptnet;
  throw ConfigError("unknown block kind '" + name + "' (valid: DPRNN, DPTNET)");
}

bool HasRefinePhase(VariantKind kind) { return !IsOnePhase(kind); }

bool UsesCoarseLoss(VariantKind kind) { return kind != VariantKind::kSrssnLrOnly; }

void ApplyOverride(json& doc, const std::string& dotted_key, const json& value) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  // A variant name replaces only the kind of an object-form variant.
  if (dotted_key == "variant" && value.is_string() && doc.contains("variant") &&
      doc["variant"].is_object()) {
    doc["variant"]["kind"] = value;
    return;
  }
  json* cur = &doc;
  size_t start = 0;
  while (true) {
    const size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("invalid override key '" + dotted_key + "'");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    if (!cur->contains(part)) (*cur)[part] = json::object();
    cur = &(*cur)[part];
    if (!cur->is_object()) {
      throw ConfigError("invalid override key '" + dotted_key + "': '" + part +
                        "' is not a section");
    }
    start = dot + 1;
  }
}

namespace {

json CodecToJson(const CodecConfig& c) {
  return {{"n_coarse_basis", c.n_coarse_basis}, {"coarse_kernel", c.coarse_kernel},
          {"coarse_stride", c.coarse_stride},   {"n_fine_basis", c.n_fine_basis},
          {"fine_kernel", c.fine_kernel},       {"fine_stride", c.fine_stride},
          {"n_groups", c.n_groups},             {"bias", c.bias},
          {"depth", c.depth}};
}

CodecConfig CodecFromJson(const json& j, const std::string& section) {
  CodecConfig c;
  SectionReader r(j, section);
  r.Get("n_coarse_basis", c.n_coarse_basis);
  r.Get("coarse_kernel", c.coarse_kernel);
  r.Get("coarse_stride", c.coarse_stride);
  r.Get("n_fine_basis", c.n_fine_basis);
  r.Get("fine_kernel", c.fine_kernel);
  r.Get("fine_stride", c.fine_stride);
  r.Get("n_groups", c.n_groups);
  r.Get("bias", c.bias);
  r.Get("depth", c.depth);
  r.Finish();
  return c;
}

json SeparatorToJson(const SeparatorConfig& s) {
  return {{"block_kind", BlockKindName(s.block_kind)},
          {"n_blocks", s.n_blocks},
          {"chunk_len", s.chunk_len},
          {"inner_dim", s.inner_dim},
          {"rnn_hidden", s.rnn_hidden},
          {"attn_heads", s.attn_heads},
          {"n_sources", s.n_sources},
          {"in_dim", s.in_dim}};
}

SeparatorConfig SeparatorFromJson(const json& j, const std::string& section) {
  SeparatorConfig s;
  SectionReader r(j, section);
  std::string kind = BlockKindName(s.block_kind);
  r.Get("block_kind", kind);
  s.block_kind = ParseBlockKind(kind);
  r.Get("n_blocks", s.n_blocks);
  r.Get("chunk_len", s.chunk_len);
  r.Get("inner_dim", s.inner_dim);
  r.Get("rnn_hidden", s.rnn_hidden);
  r.Get("attn_heads", s.attn_heads);
  r.Get("n_sources", s.n_sources);
  r.Get("in_dim", s.in_dim);
  r.Finish();
  return s;
}

void GetRange(SectionReader& r, const char* key, double& lo, double& hi) {
  if (const json* v = r.Raw(key)) {
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
      throw ConfigError("invalid config key '" + r.Path(key) + "': expected [lo, hi]");
    }
    lo = (*v)[0].get<double>();
    hi = (*v)[1].get<double>();
  }
}

}  // namespace

RunConfig ParseRunConfig(const json& doc) {
  RunConfig run;
  SectionReader top(doc, "");
  if (const json* c = top.Raw("corpus")) {
    SectionReader r(*c, "corpus");
    auto& k = run.corpus;
    r.Get("n_speakers_pool", k.n_speakers_pool);
    r.Get("n_train", k.n_train);
    r.Get("n_valid", k.n_valid);
    r.Get("n_test", k.n_test);
    r.Get("sample_rate", k.sample_rate);
    r.Get("duration_s", k.duration_s);
    GetRange(r, "snr_range", k.snr_lo, k.snr_hi);
    r.Get("noise", k.noise);
    GetRange(r, "noise_snr_range", k.noise_snr_lo, k.noise_snr_hi);
    r.Get("seed", k.seed);
    r.Finish();
  }
  if (const json* c = top.Raw("codec")) run.codec = CodecFromJson(*c, "codec");
  if (const json* c = top.Raw("separator")) run.separator = SeparatorFromJson(*c, "separator");
  if (const json* c = top.Raw("train")) {
    SectionReader r(*c, "train");
    auto& t = run.train;
    r.Get("lr", t.lr);
    r.Get("weight_decay", t.weight_decay);
    r.Get("grad_clip", t.grad_clip);
    r.Get("epochs", t.epochs);
    r.Get("batch_size", t.batch_size);
    r.Get("seed", t.seed);
    r.Get("segment_s", t.segment_s);
    r.Get("max_steps", t.max_steps);
    r.Get("log_every", t.log_every);
    r.Get("blocks_per_phase", t.blocks_per_phase);
    r.Finish();
  }
  if (const json* c = top.Raw("variant")) {
    if (c->is_string()) {
      run.variant.kind = ParseVariant(c->get<std::string>());
    } else {
      SectionReader r(*c, "variant");
      std::string kind = VariantName(run.variant.kind);
      r.Get("kind", kind);
      run.variant.kind = ParseVariant(kind);
      if (const json* o = r.Raw("overrides")) {
        if (!o->is_object()) {
          throw ConfigError("invalid config key 'variant.overrides': must be an object");
        }
        for (auto it = o->begin(); it != o->end(); ++it) {
          run.variant.overrides[it.key()] = it.value();
        }
      }
      r.Finish();
    }
  }
  if (const json* c = top.Raw("ablation")) {
    SectionReader r(*c, "ablation");
    std::vector<std::string> variants;
    std::vector<std::string> kinds;
    r.Get("variants", variants);
    r.Get("block_kinds", kinds);
    r.Get("n_seeds", run.ablation.n_seeds);
    r.Get("deeper_depths", run.ablation.deeper_depths);
    r.Finish();
    for (const auto& v : variants) run.ablation.variants.push_back(ParseVariant(v));
    for (const auto& k : kinds) run.ablation.block_kinds.push_back(ParseBlockKind(k));
  }
  top.Finish();
  run.Validate();
  return run;
}

json ToJson(const RunConfig& run) {
  const auto& k = run.corpus;
  const auto& t = run.train;
  json overrides = json::object();
  for (const auto& [key, v] : run.variant.overrides) overrides[key] = v;
  json variants = json::array();
  for (auto v : run.ablation.variants) variants.push_back(VariantName(v));
  json kinds = json::array();
  for (auto b : run.ablation.block_kinds) kinds.push_back(BlockKindName(b));
  return {
      {"corpus",
       {{"n_speakers_pool", k.n_speakers_pool},
        {"n_train", k.n_train},
        {"n_valid", k.n_valid},
        {"n_test", k.n_test},
        {"sample_rate", k.sample_rate},
        {"duration_s", k.duration_s},
        {"snr_range", {k.snr_lo, k.snr_hi}},
        {"noise", k.noise},
        {"noise_snr_range", {k.noise_snr_lo, k.noise_snr_hi}},
        {"seed", k.seed}}},
      {"codec", CodecToJson(run.codec)},
      {"separator", SeparatorToJson(run.separator)},
      {"train",
       {{"lr", t.lr},
        {"weight_decay", t.weight_decay},
        {"grad_clip", t.grad_clip},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"segment_s", t.segment_s},
        {"max_steps", t.max_steps},
        {"log_every", t.log_every},
        {"blocks_per_phase", t.blocks_per_phase}}},
      {"variant", {{"kind", VariantName(run.variant.kind)}, {"overrides", overrides}}},
      {"ablation",
       {{"variants", variants},
        {"block_kinds", kinds},
        {"n_seeds", run.ablation.n_seeds},
        {"deeper_depths", run.ablation.deeper_depths}}},
  };
}

ModelConfig ResolveModelConfig(const RunConfig& run) {
  const VariantKind kind = run.variant.kind;
  json codec = CodecToJson(run.codec);
  json sep = SeparatorToJson(run.separator);
  switch (kind) {
    case VariantKind::kBaseExpanded:
      codec["n_coarse_basis"] = 1024;
      break;
    case VariantKind::kBaseDeeper:
      if (run.codec.depth < 2) codec["depth"] = 2;
      break;
    case VariantKind::kSrssn1D:
      codec["n_groups"] = 1;
      break;
    case VariantKind::kSrssn1DExpanded:
      codec["n_groups"] = 1;
      codec["n_fine_basis"] = 1024;
      break;
    default:
      break;
  }
  for (const auto& [key, value] : run.variant.overrides) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
    json* target = section == "codec" ? &codec : section == "separator" ? &sep : nullptr;
    if (!target || field.empty() || !target->contains(field)) {
      throw ConfigError("invalid config key 'variant.overrides." + key +
                        "': expected codec.<field> or separator.<field>");
    }
    (*target)[field] = value;
  }

  ModelConfig m;
  m.variant = kind;
  m.codec = CodecFromJson(codec, "codec");
  if (kind != VariantKind::kBaseDeeper && m.codec.depth != 1) {
    throw ConfigError("invalid config key 'codec.depth': only BASE_DEEPER uses a deeper codec");
  }
  m.codec.Validate();
  m.sample_rate = run.corpus.sample_rate;

  SeparatorConfig s = SeparatorFromJson(sep, "separator");
  if (run.train.blocks_per_phase > 0) {
    s.n_blocks = IsOnePhase(kind) ? 2 * run.train.blocks_per_phase : run.train.blocks_per_phase;
  }
  m.coarse_separator = s;
  m.refine_separator = s;
  const bool high_order_only = kind == VariantKind::kBaseHighOrder;
  m.coarse_separator.in_dim = high_order_only ? m.codec.n_fine_basis : m.codec.n_coarse_basis;
  m.refine_separator.in_dim =
      kind == VariantKind::kIterative ? m.codec.n_coarse_basis : m.codec.n_fine_basis;
  m.coarse_separator.Validate();
  m.refine_separator.Validate();
  return m;
}

json ToJson(const ModelConfig& m) {
  return {{"variant", VariantName(m.variant)},
          {"codec", CodecToJson(m.codec)},
          {"coarse_separator", SeparatorToJson(m.coarse_separator)},
          {"refine_separator", SeparatorToJson(m.refine_separator)},
          {"sample_rate", m.sample_rate}};
}

ModelConfig ModelConfigFromJson(const json& doc) {
  ModelConfig m;
  SectionReader r(doc, "model");
  std::string variant;
  r.Get("variant", variant);
  m.variant = ParseVariant(variant);
  const json* codec = r.Raw("codec");
  const json* cs = r.Raw("coarse_separator");
  const json* rs = r.Raw("refine_separator");
  if (!codec || !cs || !rs) throw ConfigError("model config incomplete");
  m.codec = CodecFromJson(*codec, "model.codec");
  m.coarse_separator = SeparatorFromJson(*cs, "model.coarse_separator");
  m.refine_separator = SeparatorFromJson(*rs, "model.refine_separator");
  r.Get("sample_rate", m.sample_rate);
  r.Finish();
  m.codec.Validate();
  m.coarse_separator.Validate();
  m.refine_separator.Validate();
  return m;
}

}  // namespace stepsep
