// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every differentiable model component on small
// random float64 instances.

#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "decoar/core/gradcheck.hpp"
#include "decoar/encoder/encoder.hpp"
#include "decoar/objectives/objectives.hpp"
#include "decoar/quantizer/quantizer.hpp"

namespace decoar {

struct GradCheckCase {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0;
  double seconds = 0;
};

namespace detail {

inline Tensor<double> random_input(Shape shape, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor<double>(std::move(shape), std::move(v));
}

inline std::vector<double> random_readout(std::size_t n, RngStream& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.normal();
  return w;
}

inline std::vector<Tensor<double>> with_params(std::vector<Tensor<double>> inputs, const ParameterSet<double>& ps) {
  for (const auto& p : ps) inputs.push_back(p.tensor);
  return inputs;
}

inline EncoderConfig gradcheck_encoder() { return EncoderConfig{6, 16, 2, 4, 24, 4, 2, 0.0}; }

/// One random instance of component `name`; returns its max relative error.
inline double gradcheck_instance(const std::string& name, std::uint64_t seed) {
  RngStream rng(seed, "gradcheck." + name);
  RngStream init = rng.fork(1);
  const auto no_args = [](auto f) { return [f](const std::vector<Tensor<double>>&) { return f(); }; };
  if (name == "projection") {
    auto x = random_input({3 + seed % 3, 5}, rng), w = random_input({5, 4}, rng), b = random_input({4}, rng);
    const auto r = random_readout(x.dim(0) * 4, rng);
    return check_gradients([&](const auto& p) { return weighted_sum(linear(p[0], p[1], p[2]), r); }, {x, w, b})
        .max_rel_error;
  }
  if (name == "conv-positional" || name == "attention-block" || name == "encoder") {
    ParameterSet<double> ps;
    Encoder<double> enc(gradcheck_encoder(), ps, init);
    const std::size_t batch = 1 + seed % 2, t = 5 + seed % 4;
    auto x = random_input({batch * t, 6}, rng);
    const auto r = random_readout(batch * t * 16, rng);
    if (name == "conv-positional") {
      return check_gradients(no_args([&] { return weighted_sum(enc.positional(x, t), r); }), with_params({x}, ps))
          .max_rel_error;
    }
    if (name == "attention-block") {
      auto h = random_input({batch * t, 16}, rng);
      return check_gradients(no_args([&] { return weighted_sum(enc.block(0, h, t), r); }), with_params({h}, ps))
          .max_rel_error;
    }
    const std::vector<std::size_t> masked{1, 2};
    return check_gradients(no_args([&] { return weighted_sum(enc.forward(x, t, masked), r); }), with_params({x}, ps))
        .max_rel_error;
  }
  if (name == "ffn") {
    auto x = random_input({4, 6}, rng), w1 = random_input({6, 10}, rng, 0.5), b1 = random_input({10}, rng);
    auto w2 = random_input({10, 6}, rng, 0.5), b2 = random_input({6}, rng);
    const auto r = random_readout(4 * 6, rng);
    return check_gradients([&](const auto& p) { return weighted_sum(linear(gelu(linear(p[0], p[1], p[2])), p[3], p[4]), r); },
                           {x, w1, b1, w2, b2})
        .max_rel_error;
  }
  if (name == "soft-quantizer") {
    ParameterSet<double> ps;
    Quantizer<double> q(CodebookConfig{2, 4, 0, 8}, 8, ps, init);
    auto z = random_input({6, 8}, rng);
    const auto r = random_readout(6 * 8, rng);
    const RngStream noise = rng.fork(2);
    const double tau = 0.5 + 0.3 * static_cast<double>(seed % 5);
    return check_gradients(no_args([&] { return weighted_sum(q.train(z, tau, &noise, false).quantized, r); }),
                           with_params({z}, ps))
        .max_rel_error;
  }
  if (name == "head") {
    ParameterSet<double> ps;
    ReconstructionHead<double> head(8, 4, ps, init);
    auto v = random_input({5, 8}, rng);
    const auto r = random_readout(5 * 4, rng);
    return check_gradients(no_args([&] { return weighted_sum(head.forward(v), r); }), with_params({v}, ps))
        .max_rel_error;
  }
  if (name == "l1") {
    auto target = random_input({4, 3}, rng), pred = random_input({4, 3}, rng);
    return check_gradients([&](const auto& p) { return l1_loss(target, p[0]); }, {pred}).max_rel_error;
  }
  if (name == "diversity") {
    auto logits = random_input({6, 10}, rng, 2.0);
    const std::vector<std::size_t> rows{0, 2, 3, 5};
    return check_gradients([&](const auto& p) { return diversity_loss(gumbel_softmax(p[0], {}, 2, 0.8), rows, 2); },
                           {logits})
        .max_rel_error;
  }
  throw UsageError("grad-check: unknown op '" + name + "'");
}

}  // namespace detail

inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{"projection", "conv-positional", "attention-block", "ffn",
                                            "soft-quantizer", "head", "l1", "diversity", "encoder"};
  return ops;
}

inline GradCheckCase run_gradcheck(const std::string& name, std::size_t instances = 5) {
  GradCheckCase c;
  c.name = name;
  c.instances = instances;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < instances; ++i) {
    c.max_rel_error = std::max(c.max_rel_error, detail::gradcheck_instance(name, i));
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

}  // namespace decoar
