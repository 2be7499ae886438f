// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Framewise multinomial logistic-regression probe on fixed features.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "decoar/core/nn_ops.hpp"
#include "decoar/core/optim.hpp"
#include "decoar/features/feature_sequence.hpp"

namespace decoar {

struct ProbeConfig {
  double lr = 0.02;
  std::int64_t max_steps = 1500;
  std::int64_t window = 100;
  double min_improvement = 1e-5;

  void validate() const {
    if (!(lr > 0) || max_steps < 1 || window < 1 || !(min_improvement >= 0)) {
      throw UsageError("probe config: lr > 0, max_steps >= 1, window >= 1, min_improvement >= 0 required");
    }
  }
};

/// Row-stacked frames and their labels.
struct FrameSet {
  std::size_t dim = 0;
  std::vector<float> x;
  std::vector<std::uint32_t> y;
  std::size_t size() const { return y.size(); }
};

inline FrameSet stack_frames(const std::vector<FeatureSequence>& seqs) {
  FrameSet s;
  for (const auto& q : seqs) {
    if (!q.labels) throw DataError("utterance " + q.utterance_id + " has no frame labels");
    if (s.dim == 0) s.dim = q.dim;
    if (q.dim != s.dim) throw DataError("probe: inconsistent feature dimensions");
    s.x.insert(s.x.end(), q.frames.begin(), q.frames.end());
    for (auto l : *q.labels) s.y.push_back(l);
  }
  if (s.y.empty()) throw DataError("probe: no frames");
  return s;
}

struct ProbeResult {
  double accuracy = 0;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::int64_t steps = 0;
  double final_train_loss = 0;
};

/// Standardises with training statistics, trains W, b with full-batch Adam
/// from zero until the loss improves by less than `min_improvement` over
/// `window` steps (or `max_steps`), then scores the held-out frames.
inline ProbeResult train_probe(const FrameSet& train, const FrameSet& heldout, std::size_t num_classes,
                               const ProbeConfig& cfg = {}) {
  cfg.validate();
  if (train.dim != heldout.dim) throw DataError("probe: train and held-out feature dimensions differ");
  if (num_classes < 2) throw UsageError("probe: need at least two classes");
  for (const auto* set : {&train, &heldout}) {
    for (auto l : set->y) {
      if (l >= num_classes) {
        throw DataError("probe: label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
  const std::size_t d = train.dim, n = train.size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < d; ++f) mu[f] += train.x[i * d + f];
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < d; ++f) sd[f] += (train.x[i * d + f] - mu[f]) * (train.x[i * d + f] - mu[f]);
  for (auto& s : sd) s = std::sqrt(std::max(s / static_cast<double>(n), 1e-12));
  auto standardise = [&](const FrameSet& s) {
    std::vector<float> out(s.x.size());
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t f = 0; f < d; ++f) out[i * d + f] = static_cast<float>((s.x[i * d + f] - mu[f]) / sd[f]);
    return Tensor<float>({s.size(), d}, std::move(out));
  };
  const auto xtr = standardise(train), xte = standardise(heldout);

  ParameterSet<float> params;
  auto w = params.add("probe.weight", Tensor<float>::zeros({d, num_classes}));
  auto b = params.add("probe.bias", Tensor<float>::zeros({num_classes}));
  auto adam = AdamState::for_parameters(params);
  std::vector<double> history;
  ProbeResult r;
  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    params.zero_grad();
    auto loss = softmax_cross_entropy(linear(xtr, w, b), train.y);
    history.push_back(loss.item());
    r.steps = step + 1;
    if (step >= cfg.window && history[step - cfg.window] - history[step] < cfg.min_improvement) break;
    backward(loss);
    adam_step(params, adam, cfg.lr);
  }
  r.final_train_loss = history.back();

  const auto logits = linear(xte, w, b);
  r.confusion.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const float* row = logits.values().data() + i * num_classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (row[c] > row[best]) best = c;
    ++r.confusion[heldout.y[i]][best];
    correct += best == heldout.y[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(heldout.size());
  return r;
}

/// Fraction of frames whose label is the majority label of their code.
inline double cluster_purity(const std::vector<std::uint64_t>& codes, const std::vector<std::uint32_t>& labels) {
  if (codes.size() != labels.size() || codes.empty()) throw UsageError("cluster_purity: size mismatch or empty");
  std::map<std::uint64_t, std::map<std::uint32_t, std::uint64_t>> counts;
  for (std::size_t i = 0; i < codes.size(); ++i) ++counts[codes[i]][labels[i]];
  std::uint64_t majority = 0;
  for (const auto& [code, hist] : counts) {
    std::uint64_t best = 0;
    for (const auto& [label, c] : hist) best = std::max(best, c);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(codes.size());
}

}  // namespace decoar
