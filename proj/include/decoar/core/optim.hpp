// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam, global-norm clipping and the learning-rate / temperature schedules.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "decoar/core/error.hpp"
#include "decoar/core/parameters.hpp"

namespace decoar {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;

  template <class T>
  static AdamState for_parameters(const ParameterSet<T>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.names.push_back(p.name);
      s.first_moment.emplace_back(p.tensor.numel(), 0.0f);
      s.second_moment.emplace_back(p.tensor.numel(), 0.0f);
    }
    return s;
  }

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. Gradients are validated before any
/// parameter is touched, so a rejected step leaves everything unchanged.
template <class T>
void adam_step(ParameterSet<T>& params, AdamState& state, double lr) {
  if (lr < 0) throw UsageError("adam_step: negative learning rate");
  if (state.names.size() != params.size()) {
    throw UsageError("adam_step: optimizer state tracks " + std::to_string(state.names.size()) +
                     " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.names[i] != p.name || state.first_moment[i].size() != p.tensor.numel() ||
        state.second_moment[i].size() != p.tensor.numel()) {
      throw UsageError("adam_step: moment buffers do not match parameter '" + p.name + "'");
    }
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericalError("adam_step: non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    auto values = tensor.mutable_values();
    auto grad = tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = grad[j];
      const T mj = b1 * static_cast<T>(m[j]) + (T(1) - b1) * g;
      const T vj = b2 * static_cast<T>(v[j]) + (T(1) - b2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = static_cast<double>(mj) / bc1;
      const double v_hat = static_cast<double>(vj) / bc2;
      values[j] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      for (auto& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

struct LrSchedule {
  std::int64_t warmup_steps = 32000;
  double peak_lr = 3e-4;
  std::int64_t total_steps = 400000;

  void validate() const {
    if (warmup_steps <= 0 || !(peak_lr >= 0) || total_steps <= warmup_steps) {
      throw UsageError("lr schedule requires warmup > 0, peak >= 0 and total > warmup");
    }
  }
};

/// Linear warm-up to the peak, then linear decay to zero at total_steps.
inline double lr_at(const LrSchedule& s, std::int64_t step) {
  if (step <= 0) return 0.0;
  if (step <= s.warmup_steps) {
    return s.peak_lr * (static_cast<double>(step) / static_cast<double>(s.warmup_steps));
  }
  if (step >= s.total_steps) return 0.0;
  return s.peak_lr * (static_cast<double>(s.total_steps - step) /
                      static_cast<double>(s.total_steps - s.warmup_steps));
}

struct TemperatureSchedule {
  double start = 2.0;
  double floor = 0.5;
  double decay_factor = 0.999995;

  void validate() const {
    if (start <= 0 || floor <= 0 || decay_factor <= 0 || decay_factor >= 1) {
      throw UsageError("temperature schedule requires start, floor > 0 and decay in (0, 1)");
    }
  }
};

/// Geometric annealing clamped at the floor.
inline double temperature_at(const TemperatureSchedule& s, std::int64_t step) {
  if (step <= 0) return std::max(s.floor, s.start);
  return std::max(s.floor, s.start * std::pow(s.decay_factor, static_cast<double>(step)));
}

}  // namespace decoar
