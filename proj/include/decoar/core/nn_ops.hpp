// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fused network layers with hand-written backward passes. Sequence inputs are
// batches of equal-length sequences stacked row-wise: [batch * seq_len, C].

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "decoar/core/ops.hpp"

namespace decoar {

/// Row-wise layer normalisation with learned gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  detail::require(gain.numel() == cols && bias.numel() == cols, "layer_norm: parameter size mismatch");
  std::vector<T> out(rows * cols), xhat(rows * cols), inv_std(rows);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T mu = T(0);
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (row[c] - mu) * is;
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * gain[c] + bias[c];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& n) {
        const auto& gv = detail::input_value(n, 1);
        if (detail::wants_grad(n, 1) || detail::wants_grad(n, 2)) {
          const bool wg = detail::wants_grad(n, 1), wb = detail::wants_grad(n, 2);
          std::vector<T>* gg = wg ? &detail::input_grad(n, 1) : nullptr;
          std::vector<T>* gb = wb ? &detail::input_grad(n, 2) : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              const T dy = n.grad[r * cols + c];
              if (wg) (*gg)[c] += dy * xhat[r * cols + c];
              if (wb) (*gb)[c] += dy;
            }
          }
        }
        if (detail::wants_grad(n, 0)) {
          auto& gx = detail::input_grad(n, 0);
          const T inv_n = T(1) / static_cast<T>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = T(0), mean_dh_h = T(0);
            for (std::size_t c = 0; c < cols; ++c) {
              const T dh = n.grad[r * cols + c] * gv[c];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * cols + c];
            }
            mean_dh *= inv_n;
            mean_dh_h *= inv_n;
            for (std::size_t c = 0; c < cols; ++c) {
              const T dh = n.grad[r * cols + c] * gv[c];
              gx[r * cols + c] += inv_std[r] * (dh - mean_dh - xhat[r * cols + c] * mean_dh_h);
            }
          }
        }
      });
}

/// Left padding for a length-preserving convolution. Even kernels put the
/// extra tap on the left.
inline std::size_t same_padding_left(std::size_t kernel) { return kernel / 2; }

/// Grouped 1-D convolution over time with length-preserving zero padding.
/// x: [batch*seq_len, in_ch], weight: [out_ch, in_ch/groups, kernel],
/// bias: [out_ch]. Output: [batch*seq_len, out_ch].
template <class T>
Tensor<T> conv1d_same(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                      std::size_t seq_len, std::size_t groups) {
  detail::require_matrix(x, "conv1d_same");
  detail::require(weight.rank() == 3, "conv1d_same: weight must be [out, in/groups, kernel]");
  const std::size_t rows = x.dim(0), in_ch = x.dim(1);
  const std::size_t out_ch = weight.dim(0), in_g = weight.dim(1), kernel = weight.dim(2);
  detail::require(seq_len > 0 && rows % seq_len == 0, "conv1d_same: rows not a multiple of seq_len");
  detail::require(groups > 0 && in_ch % groups == 0 && out_ch % groups == 0,
                  "conv1d_same: groups must divide channel counts");
  detail::require(in_g == in_ch / groups, "conv1d_same: weight input width mismatch");
  detail::require(bias.numel() == out_ch, "conv1d_same: bias size mismatch");
  const std::size_t batch = rows / seq_len, out_g = out_ch / groups;
  const std::size_t pad_left = same_padding_left(kernel);

  // Per-group, per-tap weight slices as [in_g, out_g] so a tap is a GEMM.
  auto tap_weights = [=](const std::vector<T>& w) {
    std::vector<T> taps(groups * kernel * in_g * out_g);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < kernel; ++j)
        for (std::size_t ci = 0; ci < in_g; ++ci)
          for (std::size_t co = 0; co < out_g; ++co)
            taps[((g * kernel + j) * in_g + ci) * out_g + co] =
                w[((g * out_g + co) * in_g + ci) * kernel + j];
    return taps;
  };
  using Stride = Eigen::OuterStride<>;
  using ConstStrided = Eigen::Map<const RowMatrix<T>, 0, Stride>;
  using Strided = Eigen::Map<RowMatrix<T>, 0, Stride>;

  // Valid output range [lo, hi) for tap j within one sequence.
  auto tap_range = [=](std::size_t j, std::size_t& lo, std::size_t& hi) {
    const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad_left);
    const std::ptrdiff_t l = std::max<std::ptrdiff_t>(0, -offset);
    const std::ptrdiff_t h = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(seq_len),
                                                      static_cast<std::ptrdiff_t>(seq_len) - offset);
    lo = static_cast<std::size_t>(l);
    hi = static_cast<std::size_t>(std::max(l, h));
  };

  const auto taps = tap_weights(weight.vec());
  std::vector<T> out(rows * out_ch);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < out_ch; ++c) out[r * out_ch + c] = bias[c];
  const T* xv = x.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t j = 0; j < kernel; ++j) {
        std::size_t lo, hi;
        tap_range(j, lo, hi);
        if (hi <= lo) continue;
        const std::size_t src = lo + j - pad_left;
        ConstStrided in(xv + (b * seq_len + src) * in_ch + g * in_g, hi - lo, in_g, Stride(in_ch));
        Strided o(out.data() + (b * seq_len + lo) * out_ch + g * out_g, hi - lo, out_g, Stride(out_ch));
        o.noalias() += in * ConstMatrixMap<T>(taps.data() + (g * kernel + j) * in_g * out_g, in_g, out_g);
      }
    }
  }

  return Tensor<T>::make_result(
      {rows, out_ch}, std::move(out), {x, weight, bias},
      [=, taps = std::move(taps)](Node<T>& n) {
        const T* dy = n.grad.data();
        const auto& xin = detail::input_value(n, 0);
        if (detail::wants_grad(n, 2)) {
          auto& gb = detail::input_grad(n, 2);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < out_ch; ++c) gb[c] += dy[r * out_ch + c];
        }
        if (detail::wants_grad(n, 0)) {
          auto& gx = detail::input_grad(n, 0);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t g = 0; g < groups; ++g)
              for (std::size_t j = 0; j < kernel; ++j) {
                std::size_t lo, hi;
                tap_range(j, lo, hi);
                if (hi <= lo) continue;
                const std::size_t src = lo + j - pad_left;
                Strided dx(gx.data() + (b * seq_len + src) * in_ch + g * in_g, hi - lo, in_g, Stride(in_ch));
                ConstStrided d(dy + (b * seq_len + lo) * out_ch + g * out_g, hi - lo, out_g, Stride(out_ch));
                dx.noalias() +=
                    d * ConstMatrixMap<T>(taps.data() + (g * kernel + j) * in_g * out_g, in_g, out_g).transpose();
              }
        }
        if (detail::wants_grad(n, 1)) {
          std::vector<T> dtaps(taps.size(), T(0));
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t g = 0; g < groups; ++g)
              for (std::size_t j = 0; j < kernel; ++j) {
                std::size_t lo, hi;
                tap_range(j, lo, hi);
                if (hi <= lo) continue;
                const std::size_t src = lo + j - pad_left;
                ConstStrided in(xin.data() + (b * seq_len + src) * in_ch + g * in_g, hi - lo, in_g, Stride(in_ch));
                ConstStrided d(dy + (b * seq_len + lo) * out_ch + g * out_g, hi - lo, out_g, Stride(out_ch));
                MatrixMap<T>(dtaps.data() + (g * kernel + j) * in_g * out_g, in_g, out_g).noalias() +=
                    in.transpose() * d;
              }
          auto& gw = detail::input_grad(n, 1);
          for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t j = 0; j < kernel; ++j)
              for (std::size_t ci = 0; ci < in_g; ++ci)
                for (std::size_t co = 0; co < out_g; ++co)
                  gw[((g * out_g + co) * in_g + ci) * kernel + j] +=
                      dtaps[((g * kernel + j) * in_g + ci) * out_g + co];
        }
      });
}

/// Scaled dot-product attention weights for packed qkv [batch*seq_len, 3*d]:
/// returns [batch, heads, seq_len, seq_len], each query row a distribution.
/// Attention is bidirectional (no causal mask).
template <class T>
std::vector<T> attention_weights(std::span<const T> qkv, std::size_t batch, std::size_t seq_len,
                                 std::size_t model_dim, std::size_t heads) {
  using Stride = Eigen::OuterStride<>;
  using ConstStrided = Eigen::Map<const RowMatrix<T>, 0, Stride>;
  const std::size_t dh = model_dim / heads, width = 3 * model_dim;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> probs(batch * heads * seq_len * seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* base = qkv.data() + b * seq_len * width;
      ConstStrided q(base + h * dh, seq_len, dh, Stride(width));
      ConstStrided k(base + model_dim + h * dh, seq_len, dh, Stride(width));
      MatrixMap<T> p(probs.data() + (b * heads + h) * seq_len * seq_len, seq_len, seq_len);
      p.noalias() = (q * k.transpose()) * inv_scale;
      for (std::size_t i = 0; i < seq_len; ++i) {
        T mx = p(i, 0);
        for (std::size_t j = 1; j < seq_len; ++j) mx = std::max(mx, p(i, j));
        T z = T(0);
        for (std::size_t j = 0; j < seq_len; ++j) {
          p(i, j) = std::exp(p(i, j) - mx);
          z += p(i, j);
        }
        for (std::size_t j = 0; j < seq_len; ++j) p(i, j) /= z;
      }
    }
  }
  return probs;
}

/// Multi-head self-attention core: packed qkv [batch*seq_len, 3*d] with
/// column blocks Q | K | V, heads split each block evenly. Output
/// [batch*seq_len, d] is the concatenation of per-head context vectors.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& qkv, std::size_t seq_len, std::size_t heads) {
  detail::require_matrix(qkv, "multi_head_attention");
  const std::size_t rows = qkv.dim(0), width = qkv.dim(1);
  detail::require(width % 3 == 0, "multi_head_attention: width must be 3*d");
  const std::size_t d = width / 3;
  detail::require(heads > 0 && d % heads == 0, "multi_head_attention: heads must divide d");
  detail::require(seq_len > 0 && rows % seq_len == 0, "multi_head_attention: rows not a multiple of seq_len");
  const std::size_t batch = rows / seq_len, dh = d / heads;
  using Stride = Eigen::OuterStride<>;
  using ConstStrided = Eigen::Map<const RowMatrix<T>, 0, Stride>;
  using Strided = Eigen::Map<RowMatrix<T>, 0, Stride>;

  auto probs = attention_weights<T>(qkv.values(), batch, seq_len, d, heads);
  std::vector<T> out(rows * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* base = qkv.values().data() + b * seq_len * width;
      ConstStrided v(base + 2 * d + h * dh, seq_len, dh, Stride(width));
      ConstMatrixMap<T> p(probs.data() + (b * heads + h) * seq_len * seq_len, seq_len, seq_len);
      Strided o(out.data() + b * seq_len * d + h * dh, seq_len, dh, Stride(d));
      o.noalias() = p * v;
    }
  }

  return Tensor<T>::make_result(
      {rows, d}, std::move(out), {qkv},
      [=, probs = std::move(probs)](Node<T>& n) {
        const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
        const auto& xv = detail::input_value(n, 0);
        auto& gx = detail::input_grad(n, 0);
        RowMatrix<T> dp(seq_len, seq_len);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const T* base = xv.data() + b * seq_len * width;
            T* gbase = gx.data() + b * seq_len * width;
            ConstStrided q(base + h * dh, seq_len, dh, Stride(width));
            ConstStrided k(base + d + h * dh, seq_len, dh, Stride(width));
            ConstStrided v(base + 2 * d + h * dh, seq_len, dh, Stride(width));
            Strided gq(gbase + h * dh, seq_len, dh, Stride(width));
            Strided gk(gbase + d + h * dh, seq_len, dh, Stride(width));
            Strided gv(gbase + 2 * d + h * dh, seq_len, dh, Stride(width));
            ConstMatrixMap<T> p(probs.data() + (b * heads + h) * seq_len * seq_len, seq_len, seq_len);
            ConstStrided dout(n.grad.data() + b * seq_len * d + h * dh, seq_len, dh, Stride(d));
            gv.noalias() += p.transpose() * dout;
            dp.noalias() = dout * v.transpose();
            // Softmax Jacobian, row by row: ds = p * (dp - <dp, p>).
            for (std::size_t i = 0; i < seq_len; ++i) {
              T dot = T(0);
              for (std::size_t j = 0; j < seq_len; ++j) dot += dp(i, j) * p(i, j);
              for (std::size_t j = 0; j < seq_len; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * inv_scale;
            }
            gq.noalias() += dp * k;
            gk.noalias() += dp.transpose() * q;
          }
        }
      });
}

/// Mean softmax cross-entropy of logits [N, C] against integer labels.
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::uint32_t>& labels) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  detail::require(labels.size() == rows, "softmax_cross_entropy: label count mismatch");
  std::vector<T> probs(rows * classes);
  T loss = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    detail::require(labels[r] < classes, "softmax_cross_entropy: label out of range");
    const T* l = logits.values().data() + r * classes;
    T mx = *std::max_element(l, l + classes);
    T z = T(0);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(l[c] - mx);
      z += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
    loss += -(l[labels[r]] - mx - std::log(z));
  }
  loss /= static_cast<T>(rows);
  return Tensor<T>::make_result({1}, {loss}, {logits},
                                [rows, classes, labels, probs = std::move(probs)](Node<T>& n) {
                                  auto& g = detail::input_grad(n, 0);
                                  const T up = n.grad[0] / static_cast<T>(rows);
                                  for (std::size_t r = 0; r < rows; ++r) {
                                    for (std::size_t c = 0; c < classes; ++c) {
                                      const T y = (c == labels[r]) ? T(1) : T(0);
                                      g[r * classes + c] += up * (probs[r * classes + c] - y);
                                    }
                                  }
                                });
}

}  // namespace decoar
