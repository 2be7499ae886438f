// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking. The numeric side only ever
// evaluates the forward function, so it is independent of every backward
// closure it validates.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "decoar/core/tensor.hpp"

namespace decoar {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

/// Entry-wise |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// The floor keeps entries whose true gradient is ~0 from dividing
/// finite-difference round-off by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

using ScalarFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of `f` at `inputs` with the five-point
/// central difference of step `h` (truncation error O(h^4)). Inputs are
/// marked as requiring gradients.
inline GradCheckResult check_gradients(const ScalarFunction& f, std::vector<Tensor<double>> inputs,
                                       double h = 1e-4) {
  for (auto& in : inputs) {
    in.node().requires_grad = true;
    in.zero_grad();
  }
  const Tensor<double> root = f(inputs);
  backward(root);

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double> analytic(inputs[k].grad().begin(), inputs[k].grad().end());
    auto values = inputs[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto eval_at = [&](double offset) {
        values[i] = saved + offset;
        return f(inputs).item();
      };
      const double p1 = eval_at(h), m1 = eval_at(-h);
      const double p2 = eval_at(2 * h), m2 = eval_at(-2 * h);
      values[i] = saved;
      const double numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
      const double err = relative_error(analytic[i], numeric);
      ++result.entries_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = k;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace decoar
