// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "decoar/core/error.hpp"
#include "decoar/core/ops.hpp"
#include "decoar/core/rng.hpp"

namespace decoar {

struct MaskConfig {
  std::size_t span_length = 20;
  double target_mask_fraction = 0.40;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (span_length == 0) throw UsageError("mask span length must be at least 1");
    if (!(target_mask_fraction > 0.0 && target_mask_fraction < 1.0)) {
      throw UsageError("target mask fraction must lie in (0, 1)");
    }
  }
};

/// Disjoint spans of `span_length` frames inside [0, num_frames).
struct MaskPlan {
  std::size_t num_frames = 0;
  std::size_t span_length = 0;
  std::vector<std::size_t> span_starts;  // sorted

  std::vector<std::size_t> masked_indices() const {
    std::vector<std::size_t> out;
    out.reserve(span_starts.size() * span_length);
    for (auto s : span_starts)
      for (std::size_t k = 0; k < span_length; ++k) out.push_back(s + k);
    return out;
  }
  std::size_t masked_count() const { return span_starts.size() * span_length; }
  double masked_fraction() const {
    return num_frames ? static_cast<double>(masked_count()) / static_cast<double>(num_frames) : 0.0;
  }
  bool operator==(const MaskPlan&) const = default;
};

/// Rejection sampling of span starts: candidates are uniform over
/// [0, T-K]; a candidate overlapping an accepted span is rejected. Stops once
/// the masked fraction reaches the target or after 10*T rejections.
inline MaskPlan plan_masks(std::size_t num_frames, const MaskConfig& cfg, RngStream& rng) {
  cfg.validate();
  const std::size_t k = cfg.span_length;
  if (num_frames < k) {
    throw UsageError("plan_masks: sequence of " + std::to_string(num_frames) +
                     " frames is shorter than the span length " + std::to_string(k));
  }
  MaskPlan plan;
  plan.num_frames = num_frames;
  plan.span_length = k;
  std::vector<char> taken(num_frames, 0);
  const double target = cfg.target_mask_fraction * static_cast<double>(num_frames);
  const std::size_t max_rejections = 10 * num_frames;
  std::size_t masked = 0, rejections = 0;
  while (static_cast<double>(masked) < target && rejections < max_rejections) {
    const auto start = static_cast<std::size_t>(rng.below(num_frames - k + 1));
    if (std::any_of(taken.begin() + start, taken.begin() + start + k, [](char c) { return c != 0; })) {
      ++rejections;
      continue;
    }
    std::fill(taken.begin() + start, taken.begin() + start + k, 1);
    plan.span_starts.push_back(start);
    masked += k;
  }
  std::sort(plan.span_starts.begin(), plan.span_starts.end());
  return plan;
}

/// Replaces the masked frames of a [T, F] matrix with `mask_vector`.
template <class T>
Tensor<T> apply_masks(const Tensor<T>& features, const MaskPlan& plan, const Tensor<T>& mask_vector) {
  detail::require_matrix(features, "apply_masks");
  if (plan.num_frames != features.dim(0)) {
    throw UsageError("apply_masks: plan covers " + std::to_string(plan.num_frames) + " frames, input has " +
                     std::to_string(features.dim(0)));
  }
  return replace_rows(features, plan.masked_indices(), mask_vector);
}

}  // namespace decoar
