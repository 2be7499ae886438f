// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams. A stream is (key, counter); every draw is a
// pure function of both, so streams can be forked per step or per position,
// saved as two integers, and consumed from any thread without perturbing
// each other.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace decoar {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s,
                                       std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::string_view name)
      : key_(splitmix64(seed ^ fnv1a64(name))) {}

  static RngStream from_state(std::uint64_t key, std::uint64_t counter) {
    RngStream s;
    s.key_ = key;
    s.counter_ = counter;
    return s;
  }

  /// Independent child stream, e.g. one per training step.
  RngStream fork(std::uint64_t index) const {
    return from_state(splitmix64(key_ ^ splitmix64(index + 0x632be59bd9b4e019ULL)), 0);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t bits_at(std::uint64_t index) const {
    return splitmix64(key_ + splitmix64(index));
  }
  std::uint64_t next_bits() { return bits_at(counter_++); }

  /// Uniform in the open interval (0, 1); never returns 0 or 1.
  double uniform_open_at(std::uint64_t index) const {
    return (static_cast<double>(bits_at(index) >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform_open() { return uniform_open_at(counter_++); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n > 0. Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_bits();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; uses two draws and caches nothing.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace decoar
