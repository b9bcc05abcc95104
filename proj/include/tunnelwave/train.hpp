// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors
#pragma once

#include <tunnelwave/adam.hpp>
#include <tunnelwave/checkpoint.hpp>
#include <tunnelwave/dataset.hpp>
#include <tunnelwave/inference.hpp>
#include <tunnelwave/prbpn.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tunnelwave {

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int max_iters = 2000;
  int batch_size = 4;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: final checkpoint only
  double lr = 1e-4;
  LrSchedule schedule = LrSchedule::constant;
  double lr_min = 0.0;  // cosine floor
  double beta = 1e-4;   // TV weight
  int eval_every = 0;   // 0: no periodic evaluation
  int eval_slices = 16;
  bool augment = true;
  std::optional<CropSize> crop;
  std::optional<double> target_r2;  // stop once the evaluation R2 reaches it
  std::string checkpoint_dir;       // empty: no files written

  void validate() const {
    if (max_iters < 1) throw InvalidArgument("train: max_iters must be >= 1");
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (checkpoint_every < 0 || eval_every < 0) throw InvalidArgument("train: intervals must be >= 0");
    if (!(lr > 0.0) || !(lr_min >= 0.0) || lr_min > lr) throw InvalidArgument("train: need 0 <= lr_min <= lr, lr > 0");
    if (!(beta >= 0.0)) throw InvalidArgument("train: beta must be >= 0");
    if (eval_slices < 1) throw InvalidArgument("train: eval_slices must be >= 1");
    if (crop && (crop->w < 1 || crop->h < 1)) throw InvalidArgument("train: crop must be at least 1x1");
    if (target_r2 && !eval_every) throw InvalidArgument("train: target_r2 needs eval_every > 0");
  }

  double lr_at(std::uint64_t iteration) const {
    if (schedule == LrSchedule::constant) return lr;
    const double progress = std::min(1.0, static_cast<double>(iteration) / max_iters);
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

inline void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"max_iters", c.max_iters},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"lr", c.lr},
           {"schedule", c.schedule == LrSchedule::constant ? "constant" : "cosine"},
           {"lr_min", c.lr_min},
           {"beta", c.beta},
           {"eval_every", c.eval_every},
           {"eval_slices", c.eval_slices},
           {"augment", c.augment},
           {"checkpoint_dir", c.checkpoint_dir}};
  j["crop"] = c.crop ? Json::array({c.crop->w, c.crop->h}) : Json(nullptr);
  j["target_r2"] = c.target_r2 ? Json(*c.target_r2) : Json(nullptr);
}

inline void from_json(const Json& j, TrainConfig& c) {
  TrainConfig d;
  c.max_iters = j.value("max_iters", d.max_iters);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.lr = j.value("lr", d.lr);
  const auto schedule = j.value("schedule", std::string("constant"));
  if (schedule == "constant") {
    c.schedule = LrSchedule::constant;
  } else if (schedule == "cosine") {
    c.schedule = LrSchedule::cosine;
  } else {
    throw InvalidArgument("train: unknown lr schedule '" + schedule + "'");
  }
  c.lr_min = j.value("lr_min", d.lr_min);
  c.beta = j.value("beta", d.beta);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_slices = j.value("eval_slices", d.eval_slices);
  c.augment = j.value("augment", d.augment);
  c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
  c.crop.reset();
  if (j.contains("crop") && !j.at("crop").is_null()) c.crop = CropSize{j.at("crop").at(0), j.at("crop").at(1)};
  c.target_r2.reset();
  if (j.contains("target_r2") && !j.at("target_r2").is_null()) c.target_r2 = j.at("target_r2").get<double>();
}

struct TrainResult {
  std::uint64_t iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool early_stopped = false;
  std::optional<MetricsTable> last_eval;
  std::vector<Json> log;
};

/// Deterministic training loop. Sampling uses Rng(seed, 1); initialisation is
/// the caller's (Prbpn::initialize draws from stream 0). One step draws, per
/// batch item: the pair, the slice t, then the augmentation variates.
class Trainer {
 public:
  Trainer(Prbpn& model, const std::vector<VolumePair>& pairs_db, NormStats stats, TrainConfig cfg)
      : model_(model), pairs_(pairs_db), stats_(stats), cfg_(std::move(cfg)), rng_(cfg_.seed, 1) {
    cfg_.validate();
    check_stats(stats_);
    if (pairs_.empty()) throw InvalidArgument("train: empty dataset");
    const auto& g = pairs_.front().coarse.grid;
    for (const auto& p : pairs_) {
      if (p.coarse.grid.nx != g.nx || p.coarse.grid.ny != g.ny) {
        throw InvalidArgument("train: pairs must share the slice geometry (" + std::to_string(g.nx) + "x" +
                              std::to_string(g.ny) + " vs " + std::to_string(p.coarse.grid.nx) + "x" +
                              std::to_string(p.coarse.grid.ny) + ")");
      }
      if (p.coarse.nz != p.fine.nz || p.coarse.nz < 1) throw InvalidArgument("train: malformed pair");
    }
    adam_ = tc::Adam(model_.parameter_vars(), tc::AdamHyper{cfg_.lr});
  }

  /// Continues from a checkpoint written by this trainer's configuration.
  void resume(const Checkpoint& c) {
    if (!(c.model == model_.config())) throw InvalidArgument("resume: checkpoint network config differs");
    const Prbpn restored = restore_model(c);
    const auto& src = restored.parameters();
    const auto& dst = model_.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) const_cast<tc::Var&>(dst[i].second).mutable_value() = src[i].second.value();
    restore_optimizer(c, model_, adam_);
    rng_.set_state(c.state.rng);
    iteration_ = c.state.iteration;
  }

  Checkpoint checkpoint() const {
    TrainState s;
    s.iteration = iteration_;
    s.rng = rng_.state();
    // where files go is not part of the run, so it stays out of the bytes
    Json train = cfg_;
    train.erase("checkpoint_dir");
    return make_checkpoint(model_, &adam_, cfg_.seed, s, stats_, std::move(train));
  }

  std::vector<SamplePair> sample_batch() {
    const int n = model_.config().context_radius;
    std::vector<SamplePair> batch;
    for (int b = 0; b < cfg_.batch_size; ++b) {
      const auto& p = pairs_[rng_.below(pairs_.size())];
      const int t = static_cast<int>(rng_.below(static_cast<std::uint64_t>(p.coarse.nz)));
      auto s = normalized_window(p, stats_, t, n);
      batch.push_back(cfg_.augment ? augment(s, rng_, cfg_.crop) : random_crop(s, rng_, cfg_.crop));
    }
    return batch;
  }

  /// One optimisation step; returns the loss before the update.
  double step() {
    const auto batch = sample_batch();
    const double lr = cfg_.lr_at(iteration_);
    try {
      model_.zero_grad();
      auto loss = Prbpn::loss(model_.forward(batch_window(batch)), batch_target(batch), cfg_.beta);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw NumericError("non-finite loss");
      tc::backward(loss);
      adam_.set_lr(lr);
      adam_.step();
      ++iteration_;
      last_lr_ = lr;
      return value;
    } catch (const NumericError& e) {
      throw NumericError("training aborted at iteration " + std::to_string(iteration_ + 1) + ": " + e.what());
    }
  }

  /// Runs until max_iters (or the R2 target). Evaluation uses `eval_pairs`, or
  /// the training pairs when none are given. Log records go to `log` as JSON lines.
  TrainResult run(std::ostream* log = nullptr, const std::vector<VolumePair>* eval_pairs = nullptr) {
    TrainResult result;
    const auto& eval_set = eval_pairs ? *eval_pairs : pairs_;
    bool first = true;
    while (iteration_ < static_cast<std::uint64_t>(cfg_.max_iters)) {
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = step();
      const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (first) result.initial_loss = loss;
      first = false;
      result.final_loss = loss;
      Json rec{{"iter", iteration_}, {"loss", loss}, {"lr", last_lr_}};
      if (log_timing_) rec["wall_ms"] = wall_ms;
      const bool last = iteration_ == static_cast<std::uint64_t>(cfg_.max_iters);
      if (cfg_.eval_every > 0 && (iteration_ % cfg_.eval_every == 0 || last)) {
        result.last_eval = evaluate(model_, eval_set, stats_, cfg_.eval_slices);
        const auto summary = overall(*result.last_eval);
        rec["eval"] = summary;
        if (cfg_.target_r2 && summary.r2 >= *cfg_.target_r2) result.early_stopped = true;
      }
      if (log) *log << rec.dump() << "\n" << std::flush;
      result.log.push_back(std::move(rec));
      if (!cfg_.checkpoint_dir.empty() && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0) {
        save_checkpoint(checkpoint(), std::filesystem::path(cfg_.checkpoint_dir) /
                                          ("iter_" + std::to_string(iteration_) + ".prbw"));
      }
      if (result.early_stopped) break;
    }
    if (!cfg_.checkpoint_dir.empty()) {
      save_checkpoint(checkpoint(), std::filesystem::path(cfg_.checkpoint_dir) / "final.prbw");
    }
    result.iterations = iteration_;
    return result;
  }

  /// Whether log records carry "wall_ms" (the only non-reproducible field).
  void set_log_timing(bool on) { log_timing_ = on; }

  std::uint64_t iteration() const { return iteration_; }
  const tc::Adam& optimizer() const { return adam_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  Prbpn& model_;
  const std::vector<VolumePair>& pairs_;
  NormStats stats_;
  TrainConfig cfg_;
  Rng rng_;
  tc::Adam adam_;
  std::uint64_t iteration_ = 0;
  double last_lr_ = 0.0;
  bool log_timing_ = true;
};

/// Trains `model` in place.
inline TrainResult train(Prbpn& model, const std::vector<VolumePair>& pairs_db, const NormStats& stats,
                         const TrainConfig& cfg, std::ostream* log = nullptr,
                         const std::vector<VolumePair>* eval_pairs = nullptr) {
  Trainer trainer(model, pairs_db, stats, cfg);
  return trainer.run(log, eval_pairs);
}

}  // namespace tunnelwave
