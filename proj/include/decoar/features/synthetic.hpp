// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic labeled corpus of filterbank-like frames.
//
// Every unit owns a smooth spectral template (a few Gaussian bumps over the
// feature axis). An utterance is a random unit sequence rendered as
// segments of template frames, plus a per-utterance channel offset (a random
// mixture of the templates themselves, so a single frame cannot tell unit
// from channel), an optional slow drift, white noise, and finally a
// per-speaker gain and offset.
// Frame labels record the unit.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "decoar/core/error.hpp"
#include "decoar/core/rng.hpp"
#include "decoar/features/feature_sequence.hpp"

namespace decoar {

struct SyntheticCorpusConfig {
  std::uint64_t seed = 42;
  std::size_t num_units = 8;
  std::size_t num_speakers = 10;
  std::size_t utterances_per_speaker = 20;
  std::size_t min_frames = 150;
  std::size_t max_frames = 300;
  std::size_t min_segment = 5;
  std::size_t max_segment = 30;
  double noise_std = 0.5;
  std::size_t feature_dim = 80;
  double template_scale = 1.0;
  double drift_std = 0.0;
  double drift_min_period = 50.0;
  double drift_max_period = 200.0;
  double speaker_gain_std = 0.2;
  double speaker_offset_std = 1.0;
  double channel_std = 1.0;  // per-utterance offset: template mixture with N(0, channel_std^2) weights
  std::size_t num_channels = 8;  // > 0: utterances pick one of this many fixed offsets; 0: fresh per utterance

  void validate() const {
    if (num_units == 0 || num_speakers == 0 || utterances_per_speaker == 0 || feature_dim == 0) {
      throw UsageError("synthetic corpus: unit, speaker, utterance and feature counts must be positive");
    }
    if (num_units > 65535) throw UsageError("synthetic corpus: at most 65535 units");
    if (min_frames == 0 || min_frames > max_frames) throw UsageError("synthetic corpus: invalid frame range");
    if (min_segment == 0 || min_segment > max_segment) throw UsageError("synthetic corpus: invalid segment range");
    if (noise_std < 0 || drift_std < 0 || speaker_gain_std < 0 || speaker_offset_std < 0 || channel_std < 0) {
      throw UsageError("synthetic corpus: standard deviations must be non-negative");
    }
    if (drift_min_period <= 0 || drift_min_period > drift_max_period) {
      throw UsageError("synthetic corpus: invalid drift period range");
    }
  }
};

struct SyntheticCorpus {
  std::vector<std::vector<float>> templates;  // [unit][feature]
  std::vector<FeatureSequence> utterances;
};

namespace detail {

inline std::size_t uniform_in(RngStream& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline std::vector<float> unit_template(RngStream& rng, std::size_t dim, double scale) {
  std::vector<double> t(dim, 0.0);
  const double d = static_cast<double>(dim);
  for (int bump = 0; bump < 3; ++bump) {
    const double center = rng.uniform() * d;
    const double width = d / 40.0 + rng.uniform() * (d / 12.0 - d / 40.0);
    const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
    for (std::size_t f = 0; f < dim; ++f) {
      const double z = (static_cast<double>(f) - center) / width;
      t[f] += amp * std::exp(-0.5 * z * z);
    }
  }
  std::vector<float> out(dim);
  for (std::size_t f = 0; f < dim; ++f) out[f] = static_cast<float>(scale * t[f]);
  return out;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  const std::size_t dim = cfg.feature_dim;
  SyntheticCorpus corpus;
  RngStream template_rng(cfg.seed, "synthetic.templates");
  for (std::size_t u = 0; u < cfg.num_units; ++u) {
    auto rng = template_rng.fork(u);
    corpus.templates.push_back(detail::unit_template(rng, dim, cfg.template_scale));
  }

  RngStream speaker_root(cfg.seed, "synthetic.speakers");
  RngStream utterance_root(cfg.seed, "synthetic.utterances");
  RngStream channel_root(cfg.seed, "synthetic.channel");
  RngStream channel_choice(cfg.seed, "synthetic.channel.choice");
  for (std::size_t s = 0; s < cfg.num_speakers; ++s) {
    auto srng = speaker_root.fork(s);
    const double gain = std::exp(cfg.speaker_gain_std * srng.normal());
    std::vector<double> offset(dim);
    for (auto& o : offset) o = cfg.speaker_offset_std * srng.normal();
    char speaker_name[32];
    std::snprintf(speaker_name, sizeof speaker_name, "spk%03zu", s);

    for (std::size_t i = 0; i < cfg.utterances_per_speaker; ++i) {
      auto rng = utterance_root.fork(s * cfg.utterances_per_speaker + i);
      FeatureSequence seq;
      seq.speaker_id = speaker_name;
      char utt_name[48];
      std::snprintf(utt_name, sizeof utt_name, "%s-utt%04zu", speaker_name, i);
      seq.utterance_id = utt_name;
      seq.dim = dim;
      seq.num_frames = detail::uniform_in(rng, cfg.min_frames, cfg.max_frames);
      seq.frames.resize(seq.num_frames * dim);
      seq.labels.emplace(seq.num_frames);

      std::vector<double> channel(dim, 0.0);
      if (cfg.channel_std > 0) {
        const std::size_t utt = s * cfg.utterances_per_speaker + i;
        auto crng = cfg.num_channels > 0 ? channel_root.fork(channel_choice.fork(utt).below(cfg.num_channels))
                                         : RngStream(cfg.seed, "synthetic.channel.utterance").fork(utt);
        for (const auto& tmpl : corpus.templates) {
          const double a = cfg.channel_std * crng.normal();
          for (std::size_t f = 0; f < dim; ++f) channel[f] += a * tmpl[f];
        }
      }

      // Two sinusoidal drift components with random directions and periods.
      struct Drift {
        double period, phase;
        std::vector<double> direction;
      };
      std::vector<Drift> drifts(2);
      for (auto& dr : drifts) {
        dr.period = cfg.drift_min_period + rng.uniform() * (cfg.drift_max_period - cfg.drift_min_period);
        dr.phase = 2.0 * std::numbers::pi * rng.uniform();
        dr.direction.resize(dim);
        for (auto& v : dr.direction) v = cfg.drift_std * rng.normal();
      }

      std::size_t t = 0;
      std::size_t prev_unit = cfg.num_units;
      while (t < seq.num_frames) {
        std::size_t unit = static_cast<std::size_t>(rng.below(cfg.num_units));
        if (cfg.num_units > 1) {
          while (unit == prev_unit) unit = static_cast<std::size_t>(rng.below(cfg.num_units));
        }
        prev_unit = unit;
        const std::size_t len = detail::uniform_in(rng, cfg.min_segment, cfg.max_segment);
        for (std::size_t k = 0; k < len && t < seq.num_frames; ++k, ++t) {
          (*seq.labels)[t] = static_cast<std::uint16_t>(unit);
          const auto& tmpl = corpus.templates[unit];
          for (std::size_t f = 0; f < dim; ++f) {
            double v = tmpl[f] + channel[f];
            if (cfg.drift_std > 0) {
              for (const auto& dr : drifts) {
                v += std::sqrt(0.5) * dr.direction[f] *
                     std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / dr.period + dr.phase);
              }
            }
            if (cfg.noise_std > 0) v += cfg.noise_std * rng.normal();
            seq.frames[t * dim + f] = static_cast<float>(gain * v + offset[f]);
          }
        }
      }
      corpus.utterances.push_back(std::move(seq));
    }
  }
  return corpus;
}

}  // namespace decoar
