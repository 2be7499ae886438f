// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-training loop. Every random choice at step s (batch order, masks,
// Gumbel noise, dropout) is drawn from a stream forked from (seed, purpose, s),
// so the trainer state is just the parameters, the optimizer and the step.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "decoar/core/optim.hpp"
#include "decoar/features/feature_sequence.hpp"
#include "decoar/pipeline/model.hpp"

namespace decoar {

/// Held-out utterance indices: a seeded shuffle, first ceil(f * n) taken.
inline std::vector<bool> heldout_mask(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, "split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < std::min(k, n); ++i) held[order[i]] = true;
  return held;
}

struct DataSplit {
  std::vector<FeatureSequence> train, heldout;
};

/// Corpus split shared by pre-training and the probe; it depends only on the
/// corpus size so every model sees the same partition.
inline DataSplit split_corpus(const std::vector<FeatureSequence>& corpus, double heldout_fraction) {
  if (corpus.size() < 2) throw DataError("corpus needs at least two utterances for a train/held-out split");
  const auto held = heldout_mask(corpus.size(), heldout_fraction, 0);
  DataSplit s;
  for (std::size_t i = 0; i < corpus.size(); ++i) (held[i] ? s.heldout : s.train).push_back(corpus[i]);
  return s;
}

/// Sort by length, cut into contiguous groups of `batch_size`, shuffle group
/// order per epoch.
class LengthGroupedBatcher {
 public:
  LengthGroupedBatcher(const std::vector<FeatureSequence>& data, std::size_t batch_size, std::uint64_t seed)
      : seed_(seed) {
    if (data.empty()) throw DataError("training set is empty");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data[a].num_frames < data[b].num_frames; });
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
      groups_.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
    }
  }

  std::size_t num_groups() const { return groups_.size(); }

  const std::vector<std::size_t>& group_for_step(std::int64_t step) const {
    const auto n = static_cast<std::int64_t>(groups_.size());
    const auto epoch = static_cast<std::uint64_t>(step / n);
    const auto pos = static_cast<std::size_t>(step % n);
    std::vector<std::size_t> perm(groups_.size());
    std::iota(perm.begin(), perm.end(), 0);
    RngStream rng = RngStream(seed_, "batch.order").fork(epoch);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    return groups_[perm[pos]];
  }

 private:
  std::uint64_t seed_;
  std::vector<std::vector<std::size_t>> groups_;
};

/// Stacks sequences truncated to a common length and plans per-utterance masks.
inline Batch make_batch(const std::vector<FeatureSequence>& data, const std::vector<std::size_t>& members,
                        std::size_t max_frames, const MaskConfig& mask, const RngStream& mask_stream) {
  std::size_t len = max_frames;
  for (auto i : members) len = std::min(len, data[i].num_frames);
  Batch b;
  b.batch = members.size();
  b.seq_len = len;
  b.dim = data[members.front()].dim;
  b.frames.reserve(b.batch * len * b.dim);
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto& s = data[members[k]];
    if (s.dim != b.dim) throw DataError("utterances in a batch have different feature dimensions");
    b.frames.insert(b.frames.end(), s.frames.begin(), s.frames.begin() + static_cast<std::ptrdiff_t>(len * b.dim));
    RngStream rng = mask_stream.fork(k);
    for (auto t : plan_masks(len, mask, rng).masked_indices()) b.masked_rows.push_back(k * len + t);
  }
  return b;
}

struct TraceRow {
  std::int64_t step = 0;
  double total = 0, recon = 0, diversity = 0, temperature = 0, lr = 0, grad_norm = 0;
  std::vector<double> perplexity;  // empty without a quantizer; diversity is NaN then

  /// Bitwise comparison, so NaN fields compare equal to themselves.
  bool operator==(const TraceRow& o) const {
    auto same = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };
    if (step != o.step || perplexity.size() != o.perplexity.size()) return false;
    for (std::size_t i = 0; i < perplexity.size(); ++i)
      if (!same(perplexity[i], o.perplexity[i])) return false;
    return same(total, o.total) && same(recon, o.recon) && same(diversity, o.diversity) &&
           same(temperature, o.temperature) && same(lr, o.lr) && same(grad_norm, o.grad_norm);
  }
};

inline std::string trace_csv_header(std::size_t groups) {
  std::string h = "step,total,recon,diversity,temperature,lr,grad_norm";
  for (std::size_t g = 0; g < groups; ++g) h += ",perplexity_" + std::to_string(g);
  return h + "\n";
}

inline std::string trace_csv_row(const TraceRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,", static_cast<long long>(r.step), r.total, r.recon);
  std::string s = buf;
  if (!std::isnan(r.diversity)) {
    std::snprintf(buf, sizeof buf, "%.17g", r.diversity);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", r.temperature, r.lr, r.grad_norm);
  s += buf;
  for (double p : r.perplexity) {
    std::snprintf(buf, sizeof buf, ",%.17g", p);
    s += buf;
  }
  return s + "\n";
}

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<FeatureSequence> train, std::vector<FeatureSequence> heldout)
      : cfg_(cfg),
        model_(cfg, cfg.rng_seed),
        adam_(AdamState::for_parameters(model_.params())),
        train_(std::move(train)),
        heldout_(std::move(heldout)),
        batcher_(train_, cfg.batch_size, cfg.rng_seed) {
    for (const auto& s : train_) check_sequence(s);
    for (const auto& s : heldout_) check_sequence(s);
  }

  const TrainConfig& config() const { return cfg_; }
  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  AdamState& optimizer() { return adam_; }
  const AdamState& optimizer() const { return adam_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  /// Root streams from which every per-step stream is forked.
  std::vector<std::pair<std::string, RngStream>> streams() const {
    std::vector<std::pair<std::string, RngStream>> out;
    for (const char* name : {"batch.order", "train.mask", "train.gumbel", "train.dropout"}) {
      out.emplace_back(name, RngStream(cfg_.rng_seed, name));
    }
    return out;
  }

  /// Runs step `step()` and advances.
  TraceRow train_step() {
    const std::int64_t s = step_;
    const auto key = static_cast<std::uint64_t>(s);
    const double tau = temperature_at(cfg_.temperature, s);
    const double lr = lr_at(cfg_.lr_schedule(), s);
    Batch batch = make_batch(train_, batcher_.group_for_step(s), cfg_.max_frames(), cfg_.mask,
                             RngStream(cfg_.rng_seed, "train.mask").fork(key));
    const RngStream noise = RngStream(cfg_.rng_seed, "train.gumbel").fork(key);
    RngStream drop_rng = RngStream(cfg_.rng_seed, "train.dropout").fork(key);
    typename Model<float>::Pass pass;
    try {
      pass = model_.forward(batch, tau, &noise, DropoutContext{cfg_.encoder.dropout, &drop_rng}, false);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(s) + ": " + e.what());
    }
    if (!std::isfinite(pass.breakdown.total)) {
      throw NumericalError("non-finite loss at step " + std::to_string(s) + " (recon " +
                           std::to_string(pass.breakdown.recon) + ", diversity " +
                           std::to_string(pass.breakdown.diversity) + ")");
    }
    model_.params().zero_grad();
    backward(pass.loss);
    TraceRow row;
    row.step = s;
    row.total = pass.breakdown.total;
    row.recon = pass.breakdown.recon;
    row.diversity = pass.breakdown.diversity;
    row.temperature = tau;
    row.lr = lr;
    row.perplexity = pass.perplexity;
    try {
      row.grad_norm = clip_grad_norm(model_.params(), cfg_.grad_clip_norm);
      adam_step(model_.params(), adam_, lr);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(s) + ": " + e.what());
    }
    ++step_;
    trace_.push_back(row);
    return row;
  }

  void run_until(std::int64_t last_step) {
    while (step_ < last_step) train_step();
  }

  /// Mean L1 over masked frames of the held-out set: fixed masks, no dropout,
  /// deterministic quantizer.
  double heldout_recon() const { return evaluate_recon(model_, heldout_, cfg_); }

  static double evaluate_recon(const Model<float>& model, const std::vector<FeatureSequence>& data,
                               const TrainConfig& cfg) {
    if (data.empty()) throw DataError("held-out set is empty");
    double sum = 0;
    std::size_t count = 0;
    const RngStream masks(cfg.mask.rng_seed, "eval.mask");
    for (std::size_t i = 0; i < data.size(); ++i) {
      Batch b = make_batch(data, {i}, cfg.max_frames(), cfg.mask, masks.fork(i));
      auto pass = model.forward(b, 1.0, nullptr, {}, true);
      sum += pass.breakdown.recon_sum;
      count += pass.breakdown.recon_elements;
    }
    return sum / static_cast<double>(count);
  }

 private:
  void check_sequence(const FeatureSequence& s) const {
    s.validate();
    if (s.dim != cfg_.encoder.input_dim) {
      throw UsageError("utterance " + s.utterance_id + " has feature dimension " + std::to_string(s.dim) +
                       ", config expects " + std::to_string(cfg_.encoder.input_dim));
    }
    if (s.num_frames < cfg_.mask.span_length) {
      throw DataError("utterance " + s.utterance_id + " is shorter than one mask span");
    }
  }

  TrainConfig cfg_;
  Model<float> model_;
  AdamState adam_;
  std::vector<FeatureSequence> train_, heldout_;
  LengthGroupedBatcher batcher_;
  std::int64_t step_ = 0;
  std::vector<TraceRow> trace_;
};

}  // namespace decoar
