// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>

#include "decoar/core/gradcheck.hpp"
#include "decoar/objectives/objectives.hpp"
#include "decoar/quantizer/quantizer.hpp"
#include "test_util.hpp"

using namespace decoar;
using decoar::testing::random_tensor;
using decoar::testing::random_weights;

namespace {

Tensor<double> row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, n}, std::move(v));
}

double diversity_of(std::vector<double> pbar, std::size_t g) {
  return diversity_loss(row(std::move(pbar)), {0}, g).item();
}

}  // namespace

TEST_CASE("reconstruction head shapes and zero weights") {
  ParameterSet<double> params;
  RngStream init(1, "init");
  ReconstructionHead<double> head(8, 4, params, init);
  RngStream rng(2, "v");
  auto v = random_tensor({7, 8}, rng);
  REQUIRE(head.forward(v).shape() == Shape{7, 4});
  for (auto& p : params)
    for (auto& x : p.tensor.mutable_values()) x = 0;
  const auto y = head.forward(v);
  for (double e : y.vec()) REQUIRE(e == 0.0);
}

TEST_CASE("reconstruction head gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterSet<double> params;
    RngStream init(10 + seed, "init");
    ReconstructionHead<double> head(8, 4, params, init);
    RngStream rng(20 + seed, "v");
    auto v = random_tensor({5, 8}, rng);
    v.node().requires_grad = true;
    const auto w = random_weights(5 * 4, rng);
    std::vector<Tensor<double>> inputs{v};
    for (const auto& p : params) inputs.push_back(p.tensor);
    auto r = check_gradients([&](const std::vector<Tensor<double>>&) { return weighted_sum(head.forward(v), w); },
                             inputs);
    REQUIRE(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("l1 reconstruction loss") {
  auto x = row({1.0, 0.0});
  auto y = row({0.0, 1.0});
  REQUIRE(l1_loss(x, y).item() == 1.0);
  REQUIRE(l1_loss(x, x).item() == 0.0);

  auto pred = Tensor<double>({1, 3}, {1.0, 2.0, 5.0}, true);
  backward(l1_loss(row({1.0, 3.0, 4.0}), pred));
  REQUIRE(pred.grad()[0] == 0.0);
  REQUIRE(pred.grad()[1] == -1.0 / 3);
  REQUIRE(pred.grad()[2] == 1.0 / 3);
  REQUIRE_THROWS_AS(l1_loss(row({1.0}), pred), UsageError);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(30 + seed, "l1");
    auto target = random_tensor({4, 3}, rng);
    auto p = random_tensor({4, 3}, rng);
    p.node().requires_grad = true;
    auto r = check_gradients([&](const std::vector<Tensor<double>>&) { return l1_loss(target, p); }, {p});
    REQUIRE(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("diversity loss closed forms") {
  REQUIRE(std::abs(diversity_of(std::vector<double>(640, 1.0 / 320), 2)) < 1e-12);
  std::vector<double> onehot(640, 0.0);
  onehot[5] = onehot[320 + 17] = 1.0;
  REQUIRE(std::abs(diversity_of(onehot, 2) - 319.0 / 320) < 1e-12);
  REQUIRE(std::abs(319.0 / 320 - 0.996875) < 1e-15);
  REQUIRE(std::abs(diversity_of({0.5, 0.5, 1.0, 0.0}, 2) - 0.25) < 1e-15);
  REQUIRE_THROWS_AS(diversity_loss(row({0.5, 0.5}), {}, 1), UsageError);
}

TEST_CASE("diversity loss stays in range for random averages") {
  RngStream rng(3, "div");
  for (int i = 0; i < 10000; ++i) {
    const std::size_t g = 1 + rng.below(3), v = 2 + rng.below(20);
    std::vector<double> p(g * v);
    for (std::size_t c = 0; c < g; ++c) {
      double s = 0;
      const double sharp = 1.0 + 8.0 * rng.uniform();
      for (std::size_t j = 0; j < v; ++j) s += (p[c * v + j] = std::pow(rng.uniform(), sharp));
      for (std::size_t j = 0; j < v; ++j) p[c * v + j] /= s;
    }
    const double d = diversity_of(p, g);
    REQUIRE(d >= -1e-12);
    REQUIRE(d <= double(v - 1) / double(v) + 1e-12);
  }
}

TEST_CASE("diversity loss gradients match finite differences through a softmax") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(40 + seed, "divfd");
    auto logits = random_tensor({6, 2 * 5}, rng, 2.0);
    logits.node().requires_grad = true;
    const std::vector<std::size_t> rows{0, 2, 3, 5};
    auto r = check_gradients(
        [&](const std::vector<Tensor<double>>&) { return diversity_loss(gumbel_softmax(logits, {}, 2, 0.8), rows, 2); },
        {logits});
    REQUIRE(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("a gradient step on peaked usage lowers the diversity loss") {
  auto logits = Tensor<double>({3, 4}, {4, 0, 0, 0, 3.5, 0.2, 0, 0, 4.2, 0, 0.1, 0}, true);
  const std::vector<std::size_t> rows{0, 1, 2};
  auto loss = diversity_loss(gumbel_softmax(logits, {}, 1, 1.0), rows, 1);
  backward(loss);
  std::vector<double> stepped(12);
  for (std::size_t i = 0; i < 12; ++i) stepped[i] = logits[i] - 0.5 * logits.grad()[i];
  auto after = diversity_loss(gumbel_softmax(Tensor<double>({3, 4}, stepped), {}, 1, 1.0), rows, 1);
  REQUIRE(after.item() < loss.item());
}

TEST_CASE("total loss") {
  auto b = total_loss(1.0, 0.5, LossConfig{0.1});
  REQUIRE(std::abs(b.total - 1.05) < 1e-15);
  REQUIRE(b.alpha == 0.1);
  REQUIRE(total_loss(1.0, 0.5, LossConfig{0.0}).total == 1.0);
  REQUIRE(LossConfig{}.alpha == 0.1);
  const double t1 = total_loss(0.7, 0.3, LossConfig{0.2}).total, t2 = total_loss(0.7, 0.3, LossConfig{0.4}).total;
  REQUIRE(std::abs((t2 - t1) - 0.2 * 0.3) < 1e-15);
  REQUIRE_THROWS_AS(total_loss(NAN, 0.1, LossConfig{}), NumericalError);
  REQUIRE_THROWS_AS(total_loss(0.1, INFINITY, LossConfig{}), NumericalError);
  REQUIRE_THROWS_AS(total_loss(0.1, 0.1, LossConfig{-1.0}), UsageError);
}
