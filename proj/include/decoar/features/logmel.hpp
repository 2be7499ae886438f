// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Log-mel filterbank frontend. Each frame is processed independently:
// pre-emphasis, Hann window, zero-padded FFT magnitude, triangular mel
// filters on the HTK mel scale from 0 Hz to Nyquist, natural log with an
// energy floor.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "decoar/features/audio.hpp"
#include "decoar/features/feature_sequence.hpp"

namespace decoar {

struct LogMelConfig {
  std::size_t num_bins = 80;
  double frame_length = 0.025;
  double frame_shift = 0.010;
  double preemphasis = 0.97;
  double energy_floor = 1e-10;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::size_t fft_size_for(std::size_t frame_samples) {
  std::size_t n = 1;
  while (n < frame_samples) n <<= 1;
  return n;
}

/// Triangular filter weights [num_bins][fft_size/2 + 1], evenly spaced in mel.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t num_bins, std::size_t fft_size,
                                                       double sample_rate) {
  const std::size_t spectrum = fft_size / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(num_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_max * static_cast<double>(i) / static_cast<double>(num_bins + 1);
  }
  std::vector<std::vector<double>> bank(num_bins, std::vector<double>(spectrum, 0.0));
  for (std::size_t k = 0; k < spectrum; ++k) {
    const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / static_cast<double>(fft_size));
    for (std::size_t b = 0; b < num_bins; ++b) {
      const double left = edges[b], center = edges[b + 1], right = edges[b + 2];
      if (mel > left && mel <= center) {
        bank[b][k] = (mel - left) / (center - left);
      } else if (mel > center && mel < right) {
        bank[b][k] = (right - mel) / (right - center);
      }
    }
  }
  return bank;
}

inline std::size_t frame_count(std::size_t num_samples, std::size_t frame_samples, std::size_t shift_samples) {
  if (num_samples < frame_samples) return 0;
  return 1 + (num_samples - frame_samples) / shift_samples;
}

inline FeatureSequence logmel(const AudioClip& clip, const LogMelConfig& cfg = {}) {
  clip.validate();
  const auto frame_samples = static_cast<std::size_t>(std::lround(cfg.frame_length * clip.sample_rate));
  const auto shift_samples = static_cast<std::size_t>(std::lround(cfg.frame_shift * clip.sample_rate));
  if (frame_samples == 0 || shift_samples == 0 || cfg.num_bins == 0) {
    throw UsageError("logmel: frame length, shift and bin count must be positive");
  }
  const std::size_t num_frames = frame_count(clip.samples.size(), frame_samples, shift_samples);
  if (num_frames == 0) {
    throw DataError("logmel: clip '" + clip.utterance_id + "' is shorter than one frame");
  }
  const std::size_t nfft = fft_size_for(frame_samples);
  const std::size_t spectrum = nfft / 2 + 1;
  const auto bank = mel_filterbank(cfg.num_bins, nfft, clip.sample_rate);

  std::vector<double> window(frame_samples);
  for (std::size_t i = 0; i < frame_samples; ++i) {
    window[i] = frame_samples == 1
                    ? 1.0
                    : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                           static_cast<double>(frame_samples - 1));
  }

  FeatureSequence seq;
  seq.num_frames = num_frames;
  seq.dim = cfg.num_bins;
  seq.frames.resize(num_frames * cfg.num_bins);
  seq.frame_shift = cfg.frame_shift;
  seq.frame_length = cfg.frame_length;
  seq.speaker_id = clip.speaker_id;
  seq.utterance_id = clip.utterance_id;

  Eigen::FFT<double> fft;
  std::vector<double> buffer(nfft);
  std::vector<std::complex<double>> freq;
  std::vector<double> magnitude(spectrum);
  const double log_floor = std::log(cfg.energy_floor);
  for (std::size_t t = 0; t < num_frames; ++t) {
    const float* src = clip.samples.data() + t * shift_samples;
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (std::size_t i = 0; i < frame_samples; ++i) buffer[i] = src[i];
    for (std::size_t i = frame_samples - 1; i > 0; --i) buffer[i] -= cfg.preemphasis * buffer[i - 1];
    buffer[0] -= cfg.preemphasis * buffer[0];
    for (std::size_t i = 0; i < frame_samples; ++i) buffer[i] *= window[i];
    fft.fwd(freq, buffer);
    for (std::size_t k = 0; k < spectrum; ++k) magnitude[k] = std::abs(freq[k]);
    for (std::size_t b = 0; b < cfg.num_bins; ++b) {
      double energy = 0.0;
      for (std::size_t k = 0; k < spectrum; ++k) energy += bank[b][k] * magnitude[k];
      seq.frames[t * cfg.num_bins + b] =
          static_cast<float>(energy > cfg.energy_floor ? std::log(energy) : log_floor);
    }
  }
  return seq;
}

}  // namespace decoar
