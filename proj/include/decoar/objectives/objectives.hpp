// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction head and the training objective
//   L = L1(masked frames) + alpha * diversity(codebook usage).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "decoar/core/ops.hpp"
#include "decoar/core/parameters.hpp"

namespace decoar {

struct LossConfig {
  double alpha = 0.1;
  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw UsageError("loss config: alpha must be finite and >= 0");
  }
  bool operator==(const LossConfig&) const = default;
};

struct LossBreakdown {
  double recon = 0;
  double diversity = 0;
  double alpha = 0;
  double total = 0;
  double recon_sum = 0;           // un-normalised sum of absolute errors
  std::size_t recon_elements = 0;  // masked positions * F
};

/// d_v -> d_v -> F feed-forward network with a GELU in between.
template <class T>
class ReconstructionHead {
 public:
  ReconstructionHead(std::size_t input_dim, std::size_t feature_dim, ParameterSet<T>& params, RngStream& rng,
                     const std::string& prefix = "head") {
    const double b1 = std::sqrt(6.0 / double(2 * input_dim));
    const double b2 = std::sqrt(6.0 / double(input_dim + feature_dim));
    w1_ = params.add(prefix + ".fc1.weight", uniform_init<T>({input_dim, input_dim}, b1, rng));
    b1_ = params.add(prefix + ".fc1.bias", constant_init<T>({input_dim}, T(0)));
    w2_ = params.add(prefix + ".fc2.weight", uniform_init<T>({input_dim, feature_dim}, b2, rng));
    b2_ = params.add(prefix + ".fc2.bias", constant_init<T>({feature_dim}, T(0)));
  }

  Tensor<T> forward(const Tensor<T>& v) const { return linear(gelu(linear(v, w1_, b1_)), w2_, b2_); }
  std::size_t output_dim() const { return w2_.dim(1); }

 private:
  Tensor<T> w1_, b1_, w2_, b2_;
};

/// Mean absolute error between a constant target and a prediction of equal
/// shape. The subgradient at equality is 0.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& target, const Tensor<T>& pred) {
  detail::require_same_shape(target, pred, "l1_loss");
  const std::size_t n = pred.numel();
  std::vector<T> sign(n);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T diff = pred[i] - target[i];
    total += std::abs(diff);
    sign[i] = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
  }
  total /= static_cast<T>(n);
  return Tensor<T>::make_result({1}, {total}, {pred}, [n, sign = std::move(sign)](Node<T>& nd) {
    auto& g = detail::input_grad(nd, 0);
    const T up = nd.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) g[i] += up * sign[i];
  });
}

/// (G*V - sum_g exp(H(mean_r p[r, g]))) / (G*V) over the rows in `rows`.
template <class T>
Tensor<T> diversity_loss(const Tensor<T>& probs, const std::vector<std::size_t>& rows, std::size_t groups) {
  detail::require_matrix(probs, "diversity_loss");
  if (rows.empty()) throw UsageError("diversity_loss: no positions to average over");
  const std::size_t cols = probs.dim(1);
  detail::require(groups > 0 && cols % groups == 0, "diversity_loss: column count is not a multiple of G");
  const std::size_t v = cols / groups;
  const T inv_rows = T(1) / static_cast<T>(rows.size());
  std::vector<T> pbar(cols, T(0));
  for (auto r : rows) {
    detail::require(r < probs.dim(0), "diversity_loss: row out of range");
    for (std::size_t c = 0; c < cols; ++c) pbar[c] += probs.values()[r * cols + c];
  }
  for (auto& q : pbar) q *= inv_rows;
  std::vector<T> perplexity(groups);
  T kept = T(0);
  for (std::size_t g = 0; g < groups; ++g) {
    T h = T(0);
    for (std::size_t j = 0; j < v; ++j) {
      const T q = pbar[g * v + j];
      if (q > T(0)) h -= q * std::log(q);
    }
    perplexity[g] = std::exp(h);
    kept += perplexity[g];
  }
  const T gv = static_cast<T>(cols);
  const T value = (gv - kept) / gv;
  return Tensor<T>::make_result(
      {1}, {value}, {probs}, [rows, cols, v, gv, inv_rows, pbar, perplexity](Node<T>& n) {
        auto& g = detail::input_grad(n, 0);
        std::vector<T> dq(cols);
        for (std::size_t c = 0; c < cols; ++c) {
          const T q = std::max(pbar[c], std::numeric_limits<T>::min());
          dq[c] = n.grad[0] * perplexity[c / v] * (std::log(q) + T(1)) / gv * inv_rows;
        }
        for (auto r : rows)
          for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += dq[c];
      });
}

inline LossBreakdown total_loss(double recon, double diversity, const LossConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(recon)) throw NumericalError("total_loss: reconstruction loss is " + std::to_string(recon));
  if (!std::isfinite(diversity)) throw NumericalError("total_loss: diversity loss is " + std::to_string(diversity));
  LossBreakdown b;
  b.recon = recon;
  b.diversity = diversity;
  b.alpha = cfg.alpha;
  b.total = recon + cfg.alpha * diversity;
  return b;
}

}  // namespace decoar
