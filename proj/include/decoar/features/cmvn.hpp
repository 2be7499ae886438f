// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "decoar/features/feature_sequence.hpp"

namespace decoar {

struct SpeakerStats {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> variance;
};

/// Pooled per-coordinate statistics for every speaker.
inline std::map<std::string, SpeakerStats> speaker_statistics(const std::vector<FeatureSequence>& seqs) {
  std::map<std::string, SpeakerStats> stats;
  for (const auto& s : seqs) {
    auto& st = stats[s.speaker_id];
    if (st.mean.empty()) {
      st.mean.assign(s.dim, 0.0);
      st.variance.assign(s.dim, 0.0);
    } else if (st.mean.size() != s.dim) {
      throw DataError("speaker '" + s.speaker_id + "' has sequences of different dimension");
    }
    for (std::size_t t = 0; t < s.num_frames; ++t)
      for (std::size_t f = 0; f < s.dim; ++f) st.mean[f] += s.at(t, f);
    st.count += s.num_frames;
  }
  for (auto& [_, st] : stats)
    for (auto& m : st.mean) m /= static_cast<double>(st.count);
  for (const auto& s : seqs) {
    auto& st = stats[s.speaker_id];
    for (std::size_t t = 0; t < s.num_frames; ++t)
      for (std::size_t f = 0; f < s.dim; ++f) {
        const double d = s.at(t, f) - st.mean[f];
        st.variance[f] += d * d;
      }
  }
  for (auto& [_, st] : stats)
    for (auto& v : st.variance) v /= static_cast<double>(st.count);
  return stats;
}

/// Per-speaker mean subtraction and variance normalisation. All statistics
/// are gathered before any sequence is modified.
inline std::vector<FeatureSequence> cmvn_per_speaker(std::vector<FeatureSequence> seqs,
                                                     double variance_floor = 1e-10) {
  const auto stats = speaker_statistics(seqs);
  for (auto& s : seqs) {
    const auto& st = stats.at(s.speaker_id);
    std::vector<double> inv_std(s.dim);
    for (std::size_t f = 0; f < s.dim; ++f) inv_std[f] = 1.0 / std::sqrt(st.variance[f] + variance_floor);
    for (std::size_t t = 0; t < s.num_frames; ++t)
      for (std::size_t f = 0; f < s.dim; ++f) {
        auto& x = s.frames[t * s.dim + f];
        x = static_cast<float>((x - st.mean[f]) * inv_std[f]);
      }
  }
  return seqs;
}

}  // namespace decoar
