// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "train/trainer.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>

#include "common/alloc.h"
#include "common/error.h"
#include "common/log.h"
#include "objective/objective.h"
#include "train/checkpoint.h"
#include "train/optimizer.h"

namespace stepsep::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainItem {
  std::string id;
  std::vector<float> mixture;
  std::vector<float> targets;  // [D, T]
};

void Shuffle(std::vector<size_t>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

std::string RngState(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void AppendLine(const fs::path& path, const json& row) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to '" + path.string() + "'");
  out << row.dump() << '\n';
}

std::vector<std::vector<float>> Rows(const ag::Var<float>& est, int64_t d, int64_t len) {
  std::vector<std::vector<float>> out(d);
  for (int64_t j = 0; j < d; ++j) {
    auto s = est.value().subspan(j * len, len);
    out[j].assign(s.begin(), s.end());
  }
  return out;
}

std::vector<data::MixtureRecord> RequireSplit(const std::vector<data::MixtureRecord>& all,
                                              data::Split split, const std::string& manifest) {
  auto r = data::FilterSplit(all, split);
  if (r.empty()) {
    throw InvalidArgument("split '" + data::SplitName(split) + "' in '" + manifest +
                          "' has no records");
  }
  return r;
}

}  // namespace

json EpochMetrics::ToJson() const {
  json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss_coarse"] = loss_coarse;
  j["loss_refine"] = has_refine ? json(loss_refine) : json(nullptr);
  j["loss_total"] = loss_total;
  j["valid_delta_si_snr"] = valid_delta_si_snr;
  j["valid_delta_si_snr_coarse"] = valid_delta_si_snr_coarse;
  j["is_best"] = is_best;
  j["seconds"] = seconds;
  return j;
}

TrainSummary Train(const RunConfig& run, const TrainOptions& opt) {
  run.Validate();
  TuneAllocator();
  const fs::path dir(opt.out_dir);
  const fs::path last = dir / "last.ckpt";
  const fs::path best = dir / "best.ckpt";
  const fs::path metrics = dir / "metrics.jsonl";
  if (opt.resume && !fs::exists(last)) {
    throw InvalidArgument("cannot resume: no checkpoint at '" + last.string() + "'");
  }
  if (!opt.resume && fs::exists(last) && !opt.force) {
    throw InvalidArgument("'" + dir.string() +
                          "' already holds a training run; pass --force to overwrite");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const auto records = data::LoadManifest(opt.manifest);
  const auto train_records = RequireSplit(records, data::Split::kTrain, opt.manifest);
  const auto valid_records = RequireSplit(records, data::Split::kValid, opt.manifest);

  const ModelConfig mc = ResolveModelConfig(run);
  const int rate = mc.sample_rate;
  const int64_t seg_len = std::llround(run.train.segment_s * rate);
  std::vector<TrainItem> items;
  for (const auto& rec : train_records) {
    const auto loaded = data::LoadRecord(rec, rate);
    int k = 0;
    for (auto& seg : data::TrainingSegments(loaded, seg_len, rec.id)) {
      TrainItem it;
      it.id = rec.id + "#" + std::to_string(k++);
      it.mixture = std::move(seg.mixture);
      for (const auto& t : seg.targets) it.targets.insert(it.targets.end(), t.begin(), t.end());
      items.push_back(std::move(it));
    }
  }
  if (items.empty()) {
    throw InvalidArgument("no training segment of " + std::to_string(seg_len) +
                          " samples fits any training record");
  }
  const int64_t d = mc.coarse_separator.n_sources;
  for (const auto& it : items) {
    if (static_cast<int64_t>(it.targets.size()) != d * seg_len) {
      throw InvalidArgument("record " + it.id + " does not have " + std::to_string(d) +
                            " sources");
    }
  }

  std::unique_ptr<model::Model<float>> model;
  std::mt19937_64 rng(data::MixSeed(run.train.seed, 2));
  CheckpointState state;
  state.run_config = ToJson(run);
  std::optional<LoadedCheckpoint> resumed;
  if (opt.resume) {
    resumed = LoadCheckpoint(last.string());
    if (ToJson(resumed->model_config) != ToJson(mc)) {
      throw InvalidArgument("cannot resume: checkpoint architecture differs from the config");
    }
    model = resumed->BuildModel();
    std::istringstream is(resumed->state.rng_state);
    is >> rng;
    state.epoch = resumed->state.epoch;
    state.step = resumed->state.step;
    state.best_valid = resumed->state.best_valid;
    state.has_best = resumed->state.has_best;
  } else {
    model = std::make_unique<model::Model<float>>(mc, data::MixSeed(run.train.seed, 1));
    std::ofstream(metrics, std::ios::trunc);
  }
  Adam<float> adam(model->params(), {.lr = run.train.lr, .weight_decay = run.train.weight_decay});
  if (resumed) resumed->RestoreOptimizer(adam);

  SS_LOG_INFO << "training " << VariantName(mc.variant) << " ("
              << BlockKindName(mc.coarse_separator.block_kind) << ", "
              << model->params().Count() << " parameters) on " << items.size()
              << " segments, starting at epoch " << state.epoch + 1;

  TrainSummary summary;
  summary.best_checkpoint = best.string();
  summary.last_checkpoint = last.string();
  bool first_step = true;
  const int64_t bsz = run.train.batch_size;
  auto step_cap_reached = [&] {
    return run.train.max_steps > 0 && state.step >= run.train.max_steps;
  };

  while (state.epoch < run.train.epochs && !step_cap_reached()) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics em;
    em.epoch = ++state.epoch;
    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Shuffle(order, rng);
    int steps_this_epoch = 0;
    for (size_t start = 0; start < order.size() && !step_cap_reached(); start += bsz) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(bsz));
      const int64_t b = static_cast<int64_t>(end - start);
      std::vector<float> mix, tgt;
      std::vector<std::string> ids;
      mix.reserve(b * seg_len);
      tgt.reserve(b * d * seg_len);
      for (size_t k = start; k < end; ++k) {
        const auto& it = items[order[k]];
        mix.insert(mix.end(), it.mixture.begin(), it.mixture.end());
        tgt.insert(tgt.end(), it.targets.begin(), it.targets.end());
        ids.push_back(it.id);
      }
      auto x = ag::Var<float>::Constant({b, seg_len}, std::move(mix));
      auto out = model->Forward(x);
      auto loss = objective::ComputeJointLoss<float>(out.coarse, out.refined, tgt, mc.variant);
      if (!std::isfinite(loss.report.loss_total)) {
        const fs::path dump = dir / "nonfinite_batch.json";
        json j{{"epoch", state.epoch}, {"step", state.step + 1}, {"batch_ids", ids},
               {"loss_coarse", loss.report.loss_coarse},
               {"loss_refine", loss.report.loss_refine}};
        std::ofstream(dump) << j.dump(2) << '\n';
        std::string joined;
        for (const auto& id : ids) joined += (joined.empty() ? "" : ", ") + id;
        throw NumericError("non-finite loss at epoch " + std::to_string(state.epoch) +
                           ", step " + std::to_string(state.step + 1) + "; batch [" + joined +
                           "]; details in " + dump.string());
      }
      ag::Backward(loss.total);
      ClampGradients(model->params(), run.train.grad_clip);
      adam.Step();
      model->params().ZeroGrad();
      ++state.step;
      ++steps_this_epoch;
      if (first_step) {
        summary.first_step_loss = loss.report.loss_total;
        first_step = false;
      }
      em.loss_coarse += loss.report.loss_coarse;
      em.loss_refine += loss.report.loss_refine;
      em.loss_total += loss.report.loss_total;
      em.has_refine = loss.report.has_refine;
      if (run.train.log_every > 0 && state.step % run.train.log_every == 0) {
        SS_LOG_INFO << "epoch " << state.epoch << " step " << state.step << " loss "
                    << loss.report.loss_total;
      }
    }
    if (steps_this_epoch > 0) {
      em.loss_coarse /= steps_this_epoch;
      em.loss_refine /= steps_this_epoch;
      em.loss_total /= steps_this_epoch;
    }
    em.step = state.step;

    const EvalReport valid = Evaluate(*model, valid_records, "valid");
    em.valid_delta_si_snr = valid.headline_delta_si_snr();
    em.valid_delta_si_snr_coarse = valid.mean_coarse.delta_si_snr;
    if (!state.has_best || em.valid_delta_si_snr > state.best_valid) {
      state.best_valid = em.valid_delta_si_snr;
      state.has_best = true;
      em.is_best = true;
    }
    state.rng_state = RngState(rng);
    if (em.is_best) SaveCheckpoint(best.string(), *model, &adam, state);
    SaveCheckpoint(last.string(), *model, &adam, state);
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    AppendLine(metrics, em.ToJson());
    SS_LOG_INFO << "epoch " << em.epoch << ": loss " << em.loss_total << ", valid dSI-SNR "
                << em.valid_delta_si_snr << " dB" << (em.is_best ? " (best)" : "") << ", "
                << std::fixed << std::setprecision(1) << em.seconds << " s";
    summary.history.push_back(em);
  }
  summary.steps = state.step;
  summary.best_valid = state.best_valid;
  return summary;
}

EvalReport Evaluate(const model::Model<float>& model,
                    const std::vector<data::MixtureRecord>& records, const std::string& split) {
  if (records.empty()) throw InvalidArgument("split '" + split + "' has no records");
  TuneAllocator();
  ag::NoGradGuard guard;
  EvalReport rep;
  rep.split = split;
  rep.variant = VariantName(model.config().variant);
  const int64_t d = model.n_sources();
  PhaseMetrics sum_c, sum_r;
  for (const auto& rec : records) {
    const auto loaded = data::LoadRecord(rec, model.config().sample_rate);
    if (static_cast<int64_t>(loaded.sources.size()) != d) {
      throw InvalidArgument("record " + rec.id + " has " +
                            std::to_string(loaded.sources.size()) + " sources, model expects " +
                            std::to_string(d));
    }
    const auto& mix = loaded.mixture.samples;
    const auto len = static_cast<int64_t>(mix.size());
    std::vector<std::vector<float>> targets;
    for (const auto& s : loaded.sources) targets.push_back(s.samples);
    auto out = model.Forward(ag::Var<float>::Constant({1, len}, mix));

    RecordMetrics row;
    row.id = rec.id;
    row.n_samples = len;
    const auto mc = objective::ComputeDeltaMetrics(Rows(out.coarse, d, len), targets, mix);
    row.coarse = {mc.delta_si_snr, mc.delta_sdr};
    sum_c.delta_si_snr += mc.delta_si_snr;
    sum_c.delta_sdr += mc.delta_sdr;
    if (out.refined.defined()) {
      const auto mr = objective::ComputeDeltaMetrics(Rows(out.refined, d, len), targets, mix);
      row.refined = PhaseMetrics{mr.delta_si_snr, mr.delta_sdr};
      sum_r.delta_si_snr += mr.delta_si_snr;
      sum_r.delta_sdr += mr.delta_sdr;
    }
    rep.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(rep.rows.size());
  rep.mean_coarse = {sum_c.delta_si_snr / n, sum_c.delta_sdr / n};
  if (rep.rows.front().refined) {
    rep.mean_refined = PhaseMetrics{sum_r.delta_si_snr / n, sum_r.delta_sdr / n};
  }
  return rep;
}

EvalReport EvaluateSplit(const model::Model<float>& model, const std::string& manifest,
                         const std::string& split) {
  const data::Split s = data::ParseSplit(split);
  const auto records = data::LoadManifest(manifest);
  return Evaluate(model, RequireSplit(records, s, manifest), split);
}

json EvalReport::Summary() const {
  json j;
  j["split"] = split;
  j["variant"] = variant;
  j["n_records"] = rows.size();
  j["coarse"] = {{"delta_si_snr", mean_coarse.delta_si_snr},
                 {"delta_sdr", mean_coarse.delta_sdr}};
  j["refined"] = mean_refined ? json{{"delta_si_snr", mean_refined->delta_si_snr},
                                     {"delta_sdr", mean_refined->delta_sdr}}
                              : json(nullptr);
  return j;
}

void WriteReport(const EvalReport& report, const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report '" + path + "'");
  for (const auto& r : report.rows) {
    json j;
    j["id"] = r.id;
    j["split"] = report.split;
    j["n_samples"] = r.n_samples;
    j["coarse_delta_si_snr"] = r.coarse.delta_si_snr;
    j["coarse_delta_sdr"] = r.coarse.delta_sdr;
    j["refined_delta_si_snr"] = r.refined ? json(r.refined->delta_si_snr) : json(nullptr);
    j["refined_delta_sdr"] = r.refined ? json(r.refined->delta_sdr) : json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for report '" + path + "'");
}

json AblationTable::ToJson() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"block_kind", r.block_kind},
                         {"variant", r.variant},
                         {"depth", r.depth},
                         {"per_seed", r.per_seed},
                         {"mean", r.mean},
                         {"std", r.stddev}});
  }
  return json{{"rows", rows_json}};
}

std::string AblationTable::ToMarkdown() const {
  std::ostringstream os;
  os << "| block | variant | depth | test dSI-SNR (dB) | seeds |\n";
  os << "|---|---|---|---|---|\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << "| " << r.block_kind << " | " << r.variant << " | " << r.depth << " | " << r.mean
       << " ± " << r.stddev << " | " << r.per_seed.size() << " |\n";
  }
  return os.str();
}

AblationTable RunAblation(const RunConfig& run, const std::string& manifest,
                          const std::string& out_dir) {
  run.Validate();
  std::vector<VariantKind> variants = run.ablation.variants;
  if (variants.empty()) variants = AllVariants();
  std::vector<BlockKind> kinds = run.ablation.block_kinds;
  if (kinds.empty()) kinds = {run.separator.block_kind};

  AblationTable table;
  for (BlockKind kind : kinds) {
    for (VariantKind variant : variants) {
      std::vector<int> depths{1};
      if (variant == VariantKind::kBaseDeeper) depths = run.ablation.deeper_depths;
      std::optional<AblationRow> best;
      for (int depth : depths) {
        AblationRow row;
        row.block_kind = BlockKindName(kind);
        row.variant = VariantName(variant);
        row.depth = depth;
        for (int k = 0; k < run.ablation.n_seeds; ++k) {
          RunConfig r = run;
          r.variant.kind = variant;
          if (variant == VariantKind::kBaseDeeper) r.variant.overrides["codec.depth"] = depth;
          r.separator.block_kind = kind;
          r.train.seed = run.train.seed + static_cast<uint64_t>(k);
          std::string name = row.variant;
          if (variant == VariantKind::kBaseDeeper) name += "_depth" + std::to_string(depth);
          const fs::path dir =
              fs::path(out_dir) / row.block_kind / name / ("seed" + std::to_string(k));
          const fs::path result = dir / "result.json";
          const json cfg = ToJson(r);
          double score = 0;
          bool reused = false;
          if (fs::exists(result)) {
            std::ifstream in(result);
            const json prev = json::parse(in, nullptr, false);
            if (!prev.is_discarded() && prev.value("config", json()) == cfg &&
                prev.value("manifest", std::string()) == fs::absolute(manifest).string()) {
              score = prev.at("test_delta_si_snr").get<double>();
              reused = true;
            }
          }
          if (!reused) {
            Train(r, {manifest, dir.string(), false, true});
            const auto ckpt = LoadCheckpoint((dir / "best.ckpt").string());
            const auto rep = EvaluateSplit(*ckpt.BuildModel(), manifest, "test");
            WriteReport(rep, (dir / "report.jsonl").string());
            score = rep.headline_delta_si_snr();
            std::ofstream(result) << json{{"config", cfg},
                                          {"manifest", fs::absolute(manifest).string()},
                                          {"test_delta_si_snr", score},
                                          {"summary", rep.Summary()}}
                                         .dump(2)
                                  << '\n';
          }
          SS_LOG_INFO << row.block_kind << " " << name << " seed " << k << ": " << score
                      << " dB" << (reused ? " (reused)" : "");
          row.per_seed.push_back(score);
        }
        double mean = 0;
        for (double v : row.per_seed) mean += v;
        mean /= static_cast<double>(row.per_seed.size());
        double var = 0;
        for (double v : row.per_seed) var += (v - mean) * (v - mean);
        row.mean = mean;
        row.stddev = row.per_seed.size() > 1
                         ? std::sqrt(var / static_cast<double>(row.per_seed.size() - 1))
                         : 0.0;
        if (!best || row.mean > best->mean) best = std::move(row);
      }
      table.rows.push_back(std::move(*best));
    }
  }
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "ablation.json") << table.ToJson().dump(2) << '\n';
  std::ofstream(fs::path(out_dir) / "ablation.md") << table.ToMarkdown();
  return table;
}

}  // namespace stepsep::train
