// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Elementwise, reduction and matrix operations on Tensor.
// Matrices are row-major [rows, cols]; every reduction runs in a fixed order.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "decoar/core/tensor.hpp"

namespace decoar {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
void require_matrix(const Tensor<T>& a, const char* op) {
  require(a.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

template <class T>
bool wants_grad(const Node<T>& n, std::size_t i) {
  return n.inputs.size() > i && n.inputs[i]->requires_grad;
}

template <class T>
std::vector<T>& input_grad(Node<T>& n, std::size_t i) {
  return n.inputs[i]->ensure_grad();
}

template <class T>
const std::vector<T>& input_value(const Node<T>& n, std::size_t i) {
  return n.inputs[i]->value;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!detail::wants_grad(n, k)) continue;
      auto& g = detail::input_grad(n, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    if (detail::wants_grad(n, 0)) {
      auto& g = detail::input_grad(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (detail::wants_grad(n, 1)) {
      auto& g = detail::input_grad(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = detail::input_value(n, 0);
    const auto& bv = detail::input_value(n, 1);
    if (detail::wants_grad(n, 0)) {
      auto& g = detail::input_grad(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (detail::wants_grad(n, 1)) {
      auto& g = detail::input_grad(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [c](Node<T>& n) {
    auto& g = detail::input_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  return Tensor<T>::make_result({1}, {acc}, {a}, [](Node<T>& n) {
    auto& g = detail::input_grad(n, 0);
    const T up = n.grad[0];
    for (auto& x : g) x += up;
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Sum of elementwise product with a constant weight array; a linear readout
/// used to reduce arbitrary outputs to a scalar.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& a, const std::vector<T>& weights) {
  detail::require(weights.size() == a.numel(), "weighted_sum: weight count mismatch");
  T acc = T(0);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += a[i] * weights[i];
  return Tensor<T>::make_result({1}, {acc}, {a}, [weights](Node<T>& n) {
    auto& g = detail::input_grad(n, 0);
    const T up = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * weights[i];
  });
}

/// [M,K] x [K,N] -> [M,N]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  detail::require(b.dim(0) == k, "matmul: inner dimension mismatch " + shape_str(a.shape()) +
                                     " x " + shape_str(b.shape()));
  std::vector<T> out(m * nn);
  MatrixMap<T>(out.data(), m, nn).noalias() =
      ConstMatrixMap<T>(a.values().data(), m, k) * ConstMatrixMap<T>(b.values().data(), k, nn);
  return Tensor<T>::make_result({m, nn}, std::move(out), {a, b}, [m, k, nn](Node<T>& n) {
    ConstMatrixMap<T> dc(n.grad.data(), m, nn);
    if (detail::wants_grad(n, 0)) {
      MatrixMap<T>(detail::input_grad(n, 0).data(), m, k).noalias() +=
          dc * ConstMatrixMap<T>(detail::input_value(n, 1).data(), k, nn).transpose();
    }
    if (detail::wants_grad(n, 1)) {
      MatrixMap<T>(detail::input_grad(n, 1).data(), k, nn).noalias() +=
          ConstMatrixMap<T>(detail::input_value(n, 0).data(), m, k).transpose() * dc;
    }
  });
}

/// Affine map x[N,in] * W[in,out] + b[out]; `bias` may be undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_matrix(x, "linear");
  detail::require_matrix(weight, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  detail::require(weight.dim(0) == in, "linear: input width " + std::to_string(in) +
                                           " does not match weight " + shape_str(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) {
    detail::require(bias.numel() == out_dim, "linear: bias size mismatch");
  }
  std::vector<T> out(rows * out_dim);
  MatrixMap<T> om(out.data(), rows, out_dim);
  om.noalias() = ConstMatrixMap<T>(x.values().data(), rows, in) *
                 ConstMatrixMap<T>(weight.values().data(), in, out_dim);
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.values().data(), out_dim);
    om.rowwise() += bv;
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor<T>::make_result(
      {rows, out_dim}, std::move(out), std::move(inputs), [rows, in, out_dim](Node<T>& n) {
        ConstMatrixMap<T> dy(n.grad.data(), rows, out_dim);
        if (detail::wants_grad(n, 0)) {
          MatrixMap<T>(detail::input_grad(n, 0).data(), rows, in).noalias() +=
              dy * ConstMatrixMap<T>(detail::input_value(n, 1).data(), in, out_dim).transpose();
        }
        if (detail::wants_grad(n, 1)) {
          MatrixMap<T>(detail::input_grad(n, 1).data(), in, out_dim).noalias() +=
              ConstMatrixMap<T>(detail::input_value(n, 0).data(), rows, in).transpose() * dy;
        }
        if (detail::wants_grad(n, 2)) {
          auto& g = detail::input_grad(n, 2);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < out_dim; ++c) g[c] += n.grad[r * out_dim + c];
          }
        }
      });
}

/// Gaussian error linear unit, exact erf form.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [inv_sqrt2](Node<T>& n) {
    const auto& xv = detail::input_value(n, 0);
    auto& g = detail::input_grad(n, 0);
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      g[i] += n.grad[i] * (cdf + v * pdf);
    }
  });
}

/// Rows of x[N,C] at `rows`, in order.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  detail::require_matrix(x, "gather_rows");
  detail::require(!rows.empty(), "gather_rows: empty row set");
  const std::size_t n_rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows.size() * cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    detail::require(rows[r] < n_rows, "gather_rows: row index out of range");
    std::copy_n(x.values().data() + rows[r] * cols, cols, out.data() + r * cols);
  }
  return Tensor<T>::make_result({rows.size(), cols}, std::move(out), {x}, [rows, cols](Node<T>& n) {
    auto& g = detail::input_grad(n, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[rows[r] * cols + c] += n.grad[r * cols + c];
    }
  });
}

/// Copy of x[N,C] whose rows listed in `rows` are replaced by `fill`[C].
template <class T>
Tensor<T> replace_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows,
                       const Tensor<T>& fill) {
  detail::require_matrix(x, "replace_rows");
  const std::size_t n_rows = x.dim(0), cols = x.dim(1);
  detail::require(fill.numel() == cols, "replace_rows: fill vector has " +
                                            std::to_string(fill.numel()) + " entries, expected " +
                                            std::to_string(cols));
  std::vector<T> out(x.vec());
  std::vector<char> replaced(n_rows, 0);
  for (auto r : rows) {
    detail::require(r < n_rows, "replace_rows: row index out of range");
    replaced[r] = 1;
    std::copy_n(fill.values().data(), cols, out.data() + r * cols);
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, fill}, [replaced, cols](Node<T>& n) {
        if (detail::wants_grad(n, 0)) {
          auto& g = detail::input_grad(n, 0);
          for (std::size_t r = 0; r < replaced.size(); ++r) {
            if (replaced[r]) continue;
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += n.grad[r * cols + c];
          }
        }
        if (detail::wants_grad(n, 1)) {
          auto& g = detail::input_grad(n, 1);
          for (std::size_t r = 0; r < replaced.size(); ++r) {
            if (!replaced[r]) continue;
            for (std::size_t c = 0; c < cols; ++c) g[c] += n.grad[r * cols + c];
          }
        }
      });
}

/// Elementwise product with a constant mask, scaled; inverted dropout uses
/// keep/(1-rate) as the mask.
template <class T>
Tensor<T> mul_const(const Tensor<T>& x, std::vector<T> mask) {
  detail::require(mask.size() == x.numel(), "mul_const: mask size mismatch");
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [mask = std::move(mask)](Node<T>& n) {
                                  auto& g = detail::input_grad(n, 0);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
                                });
}

}  // namespace decoar
