// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-codebook Gumbel-Softmax vector quantization with straight-through
// gradients. Probabilities and one-hot selections are laid out as [N, G*V]
// with codebook g occupying columns [g*V, (g+1)*V).

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "decoar/core/ops.hpp"
#include "decoar/core/parameters.hpp"
#include "decoar/core/rng.hpp"

namespace decoar {

struct CodebookConfig {
  std::size_t num_codebooks = 2;
  std::size_t entries_per_codebook = 320;
  std::size_t entry_dim = 0;  // 0: model_dim / num_codebooks
  std::size_t output_dim = 64;

  std::size_t resolved_entry_dim() const { return entry_dim ? entry_dim : output_dim / num_codebooks; }

  void validate() const {
    if (num_codebooks < 1) throw UsageError("codebook config: need at least one codebook");
    if (entries_per_codebook < 2) throw UsageError("codebook config: need at least two entries per codebook");
    if (output_dim == 0) throw UsageError("codebook config: output_dim must be positive");
    if (resolved_entry_dim() == 0) throw UsageError("codebook config: entry dimension resolves to zero");
  }
  bool operator==(const CodebookConfig&) const = default;
};

inline double gumbel_noise(double u) {
  if (!(u > 0.0 && u < 1.0)) throw UsageError("gumbel_noise: u must lie in (0, 1), got " + std::to_string(u));
  return -std::log(-std::log(u));
}

namespace detail {

inline void require_codebook_layout(std::size_t cols, std::size_t groups, const char* op) {
  require(groups > 0 && cols % groups == 0 && cols / groups >= 1,
          std::string(op) + ": column count is not a multiple of the codebook count");
}

}  // namespace detail

/// softmax((logits + noise) / tau) within each codebook. `noise` may be empty
/// for zero noise.
template <class T>
Tensor<T> gumbel_softmax(const Tensor<T>& logits, const std::vector<T>& noise, std::size_t groups, T tau) {
  detail::require_matrix(logits, "gumbel_softmax");
  if (!(tau > T(0))) throw UsageError("gumbel_softmax: temperature must be positive");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  detail::require_codebook_layout(cols, groups, "gumbel_softmax");
  detail::require(noise.empty() || noise.size() == logits.numel(), "gumbel_softmax: noise size mismatch");
  const std::size_t v = cols / groups;
  const auto lv = logits.values();
  std::vector<T> p(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = r * cols + g * v;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < v; ++j) {
        const T s = (lv[base + j] + (noise.empty() ? T(0) : noise[base + j])) / tau;
        p[base + j] = s;
        mx = std::max(mx, s);
      }
      T z = T(0);
      for (std::size_t j = 0; j < v; ++j) z += (p[base + j] = std::exp(p[base + j] - mx));
      for (std::size_t j = 0; j < v; ++j) p[base + j] /= z;
    }
  }
  auto probs = p;
  return Tensor<T>::make_result(logits.shape(), std::move(p), {logits},
                                [rows, cols, groups, v, tau, probs = std::move(probs)](Node<T>& n) {
                                  auto& g = detail::input_grad(n, 0);
                                  for (std::size_t r = 0; r < rows; ++r) {
                                    for (std::size_t c = 0; c < groups; ++c) {
                                      const std::size_t base = r * cols + c * v;
                                      T dot = T(0);
                                      for (std::size_t j = 0; j < v; ++j) dot += n.grad[base + j] * probs[base + j];
                                      for (std::size_t j = 0; j < v; ++j) {
                                        g[base + j] += probs[base + j] * (n.grad[base + j] - dot) / tau;
                                      }
                                    }
                                  }
                                });
}

/// Per-row, per-codebook argmax; ties go to the lowest index.
template <class T>
std::vector<std::uint32_t> grouped_argmax(std::span<const T> values, std::size_t rows, std::size_t cols,
                                          std::size_t groups) {
  detail::require_codebook_layout(cols, groups, "grouped_argmax");
  detail::require(values.size() == rows * cols, "grouped_argmax: size mismatch");
  const std::size_t v = cols / groups;
  std::vector<std::uint32_t> idx(rows * groups);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      const T* row = values.data() + r * cols + g * v;
      std::size_t best = 0;
      for (std::size_t j = 1; j < v; ++j) {
        if (row[j] > row[best]) best = j;
      }
      idx[r * groups + g] = static_cast<std::uint32_t>(best);
    }
  }
  return idx;
}

/// Forward: the one-hot of `indices`. Backward: identity into `soft`.
template <class T>
Tensor<T> straight_through_onehot(const Tensor<T>& soft, const std::vector<std::uint32_t>& indices,
                                  std::size_t groups) {
  detail::require_matrix(soft, "straight_through_onehot");
  const std::size_t rows = soft.dim(0), cols = soft.dim(1);
  detail::require_codebook_layout(cols, groups, "straight_through_onehot");
  detail::require(indices.size() == rows * groups, "straight_through_onehot: index count mismatch");
  const std::size_t v = cols / groups;
  std::vector<T> out(rows * cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      detail::require(indices[r * groups + g] < v, "straight_through_onehot: index out of range");
      out[r * cols + g * v + indices[r * groups + g]] = T(1);
    }
  }
  return Tensor<T>::make_result(soft.shape(), std::move(out), {soft}, [](Node<T>& n) {
    auto& g = detail::input_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

/// out[n, g*dc:(g+1)*dc] = sum_j w[n, g*V + j] * entries[g, j, :].
template <class T>
Tensor<T> grouped_select(const Tensor<T>& weights, const Tensor<T>& entries) {
  detail::require_matrix(weights, "grouped_select");
  detail::require(entries.rank() == 3, "grouped_select: entries must be [G, V, dc]");
  const std::size_t groups = entries.dim(0), v = entries.dim(1), dc = entries.dim(2);
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  detail::require(cols == groups * v, "grouped_select: weight columns must equal G*V");
  const std::size_t out_cols = groups * dc;
  std::vector<T> out(rows * out_cols, T(0));
  for (std::size_t g = 0; g < groups; ++g) {
    ConstStridedMap<T> w(weights.values().data() + g * v, rows, v, Eigen::OuterStride<>(cols));
    ConstMatrixMap<T> e(entries.values().data() + g * v * dc, v, dc);
    StridedMap<T> o(out.data() + g * dc, rows, dc, Eigen::OuterStride<>(out_cols));
    o.noalias() = w * e;
  }
  return Tensor<T>::make_result({rows, out_cols}, std::move(out), {weights, entries},
                                [rows, cols, groups, v, dc, out_cols](Node<T>& n) {
                                  for (std::size_t g = 0; g < groups; ++g) {
                                    ConstStridedMap<T> dy(n.grad.data() + g * dc, rows, dc,
                                                         Eigen::OuterStride<>(out_cols));
                                    if (detail::wants_grad(n, 0)) {
                                      const auto& ev = detail::input_value(n, 1);
                                      ConstMatrixMap<T> e(ev.data() + g * v * dc, v, dc);
                                      StridedMap<T> gw(detail::input_grad(n, 0).data() + g * v, rows, v,
                                                      Eigen::OuterStride<>(cols));
                                      gw.noalias() += dy * e.transpose();
                                    }
                                    if (detail::wants_grad(n, 1)) {
                                      const auto& wv = detail::input_value(n, 0);
                                      ConstStridedMap<T> w(wv.data() + g * v, rows, v, Eigen::OuterStride<>(cols));
                                      MatrixMap<T> ge(detail::input_grad(n, 1).data() + g * v * dc, v, dc);
                                      ge.noalias() += w.transpose() * dy;
                                    }
                                  }
                                });
}

/// exp(entropy) of each codebook's averaged distribution, with 0 ln 0 = 0.
inline std::vector<double> codebook_perplexity(const std::vector<double>& pbar, std::size_t groups) {
  detail::require_codebook_layout(pbar.size(), groups, "codebook_perplexity");
  const std::size_t v = pbar.size() / groups;
  std::vector<double> out(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    double total = 0, h = 0;
    for (std::size_t j = 0; j < v; ++j) {
      const double q = pbar[g * v + j];
      if (!(q >= 0.0)) throw UsageError("codebook_perplexity: negative or non-finite probability");
      total += q;
      if (q > 0) h -= q * std::log(q);
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw UsageError("codebook_perplexity: codebook " + std::to_string(g) + " sums to " + std::to_string(total));
    }
    out[g] = std::exp(h);
  }
  return out;
}

/// Mean of the rows of a [N, G*V] probability matrix (all rows if `rows` is empty).
template <class T>
std::vector<double> average_rows(const Tensor<T>& p, const std::vector<std::size_t>& rows = {}) {
  detail::require_matrix(p, "average_rows");
  const std::size_t cols = p.dim(1);
  std::vector<double> acc(cols, 0.0);
  auto add_row = [&](std::size_t r) {
    for (std::size_t c = 0; c < cols; ++c) acc[c] += static_cast<double>(p.values()[r * cols + c]);
  };
  if (rows.empty()) {
    for (std::size_t r = 0; r < p.dim(0); ++r) add_row(r);
  } else {
    for (auto r : rows) {
      detail::require(r < p.dim(0), "average_rows: row out of range");
      add_row(r);
    }
  }
  const double count = static_cast<double>(rows.empty() ? p.dim(0) : rows.size());
  for (auto& a : acc) a /= count;
  return acc;
}

template <class T>
struct QuantizationOutput {
  Tensor<T> probabilities;              // [N, G*V]
  std::vector<std::uint32_t> indices;   // [N, G]
  Tensor<T> quantized;                  // [N, d_v]
  double temperature = 1.0;
};

/// Gumbel noise for `count` entries starting at flat offset 0, drawn
/// position-indexed from `stream`.
template <class T>
std::vector<T> gumbel_noise_block(const RngStream& stream, std::size_t count) {
  std::vector<T> n(count);
  for (std::size_t i = 0; i < count; ++i) n[i] = static_cast<T>(gumbel_noise(stream.uniform_open_at(i)));
  return n;
}

template <class T>
class Quantizer {
 public:
  Quantizer(const CodebookConfig& cfg, std::size_t input_dim, ParameterSet<T>& params, RngStream& init_rng)
      : cfg_(cfg) {
    cfg.validate();
    const std::size_t g = cfg.num_codebooks, v = cfg.entries_per_codebook, dc = cfg.resolved_entry_dim();
    const std::size_t gv = g * v;
    logits_weight_ = params.add("quantizer.logits.weight",
                                uniform_init<T>({input_dim, gv}, std::sqrt(6.0 / double(input_dim + gv)), init_rng));
    logits_bias_ = params.add("quantizer.logits.bias", constant_init<T>({gv}, T(0)));
    entries_ = params.add("quantizer.entries", uniform_init<T>({g, v, dc}, 1.0, init_rng));
    out_weight_ = params.add("quantizer.out.weight",
                             uniform_init<T>({g * dc, cfg.output_dim},
                                             std::sqrt(6.0 / double(g * dc + cfg.output_dim)), init_rng));
    out_bias_ = params.add("quantizer.out.bias", constant_init<T>({cfg.output_dim}, T(0)));
  }

  const CodebookConfig& config() const { return cfg_; }
  std::size_t groups() const { return cfg_.num_codebooks; }
  const Tensor<T>& entries() const { return entries_; }

  Tensor<T> logits(const Tensor<T>& z) const { return linear(z, logits_weight_, logits_bias_); }

  /// Output projection of the concatenated selections given [N, G*V] weights.
  Tensor<T> project(const Tensor<T>& selection) const {
    return linear(grouped_select(selection, entries_), out_weight_, out_bias_);
  }

  /// Training path. With `noise_stream` null the noise is zero. With
  /// `straight_through` false the forward value is the soft mixture, which is
  /// the surrogate whose gradients the straight-through path uses.
  QuantizationOutput<T> train(const Tensor<T>& z, double tau, const RngStream* noise_stream,
                              bool straight_through = true) const {
    if (!(tau > 0.0)) throw UsageError("quantizer: temperature must be positive");
    auto l = logits(z);
    std::vector<T> noise;
    if (noise_stream) noise = gumbel_noise_block<T>(*noise_stream, l.numel());
    auto p = gumbel_softmax(l, noise, groups(), static_cast<T>(tau));
    auto idx = grouped_argmax<T>(p.values(), p.dim(0), p.dim(1), groups());
    auto sel = straight_through ? straight_through_onehot(p, idx, groups()) : p;
    return {p, std::move(idx), project(sel), tau};
  }

  /// Deterministic path: argmax of raw logits, no noise or temperature.
  QuantizationOutput<T> inference(const Tensor<T>& z) const {
    auto l = logits(z).detach();
    auto p = gumbel_softmax(l, {}, groups(), T(1));
    auto idx = grouped_argmax<T>(l.values(), l.dim(0), l.dim(1), groups());
    return {p, idx, project(straight_through_onehot(p, idx, groups())), 1.0};
  }

 private:
  CodebookConfig cfg_;
  Tensor<T> logits_weight_, logits_bias_, entries_, out_weight_, out_bias_;
};

}  // namespace decoar
