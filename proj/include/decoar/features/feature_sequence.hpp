// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decoar/core/error.hpp"

namespace decoar {

/// T x F matrix of frames (row-major) plus framing and speaker metadata.
struct FeatureSequence {
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<float> frames;
  double frame_shift = 0.010;
  double frame_length = 0.025;
  std::string speaker_id;
  std::string utterance_id;
  std::optional<std::vector<std::uint16_t>> labels;

  std::span<const float> row(std::size_t t) const { return {frames.data() + t * dim, dim}; }
  std::span<float> row(std::size_t t) { return {frames.data() + t * dim, dim}; }
  float at(std::size_t t, std::size_t f) const { return frames[t * dim + f]; }

  void validate() const {
    if (num_frames == 0 || dim == 0) throw DataError("feature sequence '" + utterance_id + "' is empty");
    if (frames.size() != num_frames * dim) {
      throw DataError("feature sequence '" + utterance_id + "' has inconsistent frame storage");
    }
    for (float v : frames) {
      if (!std::isfinite(v)) throw DataError("feature sequence '" + utterance_id + "' has non-finite values");
    }
    if (labels && labels->size() != num_frames) {
      throw DataError("feature sequence '" + utterance_id + "' has " + std::to_string(labels->size()) +
                      " labels for " + std::to_string(num_frames) + " frames");
    }
  }

  /// First `frames_kept` frames (and labels).
  FeatureSequence truncated(std::size_t frames_kept) const {
    FeatureSequence out = *this;
    if (frames_kept >= num_frames) return out;
    out.num_frames = frames_kept;
    out.frames.resize(frames_kept * dim);
    if (out.labels) out.labels->resize(frames_kept);
    return out;
  }

  bool operator==(const FeatureSequence&) const = default;
};

}  // namespace decoar
