// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-training driver: split, train to total_steps, periodic and final
// checkpoints, optional resume.

#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "decoar/pipeline/checkpoint.hpp"

namespace decoar {

struct PretrainOptions {
  std::filesystem::path checkpoint_path;  // empty: keep everything in memory
  const Checkpoint* resume = nullptr;
  std::function<void(const TraceRow&)> on_step;
  bool evaluate_heldout = true;
};

struct PretrainResult {
  std::vector<TraceRow> trace;  // steps run by this call
  double initial_heldout_recon = std::numeric_limits<double>::quiet_NaN();
  double final_heldout_recon = std::numeric_limits<double>::quiet_NaN();
  Checkpoint checkpoint;
};

/// "<path>.step<N>" for interval checkpoints.
inline std::filesystem::path interval_checkpoint_path(const std::filesystem::path& path, std::int64_t step) {
  return path.string() + ".step" + std::to_string(step);
}

inline PretrainResult pretrain(const TrainConfig& cfg, const std::vector<FeatureSequence>& corpus,
                               const PretrainOptions& opt = {}) {
  cfg.validate();
  if (corpus.empty()) throw DataError("pretrain: corpus is empty");
  auto split = split_corpus(corpus, cfg.heldout_fraction);
  Trainer trainer(cfg, std::move(split.train), std::move(split.heldout));
  PretrainResult r;
  if (opt.resume) {
    restore(trainer, *opt.resume);
  } else if (opt.evaluate_heldout) {
    r.initial_heldout_recon = trainer.heldout_recon();
  }
  while (trainer.step() < cfg.total_steps) {
    const auto row = trainer.train_step();
    if (opt.on_step) opt.on_step(row);
    if (cfg.checkpoint_interval > 0 && !opt.checkpoint_path.empty() && trainer.step() % cfg.checkpoint_interval == 0 &&
        trainer.step() < cfg.total_steps) {
      save_checkpoint(snapshot(trainer), interval_checkpoint_path(opt.checkpoint_path, trainer.step()));
    }
  }
  if (opt.evaluate_heldout) r.final_heldout_recon = trainer.heldout_recon();
  r.trace = trainer.trace();
  r.checkpoint = snapshot(trainer);
  if (!opt.checkpoint_path.empty()) save_checkpoint(r.checkpoint, opt.checkpoint_path);
  return r;
}

}  // namespace decoar
