// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "decoar/core/error.hpp"
#include "decoar/core/rng.hpp"
#include "decoar/core/tensor.hpp"

namespace decoar {

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered collection of trainable leaves. Order is registration order and
/// fixes the order of every reduction over parameters.
template <class T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Tensor<T> tensor) {
    for (const auto& p : items_) {
      if (p.name == name) throw UsageError("duplicate parameter name: " + name);
    }
    tensor.node().requires_grad = true;
    items_.push_back({std::move(name), tensor});
    return tensor;
  }

  std::size_t size() const { return items_.size(); }
  const NamedParameter<T>& operator[](std::size_t i) const { return items_[i]; }
  NamedParameter<T>& operator[](std::size_t i) { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

  const NamedParameter<T>* find(const std::string& name) const {
    for (const auto& p : items_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
  }

  /// Order-sensitive 64-bit digest of every parameter's bit pattern.
  std::uint64_t checksum() const {
    std::uint64_t h = fnv1a64("params");
    for (const auto& p : items_) {
      h = fnv1a64(p.name, h);
      for (T v : p.tensor.values()) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes), sizeof(T)), h);
      }
    }
    return h;
  }

 private:
  std::vector<NamedParameter<T>> items_;
};

/// Glorot-uniform style initialisation from a stream.
template <class T>
Tensor<T> uniform_init(Shape shape, double bound, RngStream& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return Tensor<T>(std::move(shape), std::move(v));
}

template <class T>
Tensor<T> constant_init(Shape shape, T value) {
  auto n = shape_numel(shape);
  return Tensor<T>(std::move(shape), std::vector<T>(n, value));
}

}  // namespace decoar
