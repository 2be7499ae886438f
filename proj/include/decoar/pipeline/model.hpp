// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder + optional quantizer + reconstruction head, and the masked
// reconstruction objective over a stacked batch.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "decoar/encoder/encoder.hpp"
#include "decoar/objectives/objectives.hpp"
#include "decoar/pipeline/config.hpp"
#include "decoar/quantizer/quantizer.hpp"

namespace decoar {

/// Equal-length sequences stacked as [batch * seq_len, dim].
struct Batch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t dim = 0;
  std::vector<float> frames;
  std::vector<std::size_t> masked_rows;  // sorted
};

template <class T>
class Model {
 public:
  Model(const TrainConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg.validate();
    RngStream init(init_seed, "model.init");
    RngStream enc_rng = init.fork(0), q_rng = init.fork(1), head_rng = init.fork(2);
    encoder_ = std::make_unique<Encoder<T>>(cfg.encoder, params_, enc_rng);
    if (cfg.use_vq) quantizer_ = std::make_unique<Quantizer<T>>(cfg.codebook, cfg.encoder.model_dim, params_, q_rng);
    head_ = std::make_unique<ReconstructionHead<T>>(cfg.encoder.model_dim, cfg.encoder.input_dim, params_, head_rng);
  }

  const TrainConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const Encoder<T>& encoder() const { return *encoder_; }
  const Quantizer<T>* quantizer() const { return quantizer_.get(); }
  const ReconstructionHead<T>& head() const { return *head_; }

  /// Masked-reconstruction objective. With `noise` null and `inference` set,
  /// the quantizer takes its deterministic argmax path.
  struct Pass {
    Tensor<T> loss;
    LossBreakdown breakdown;
    std::vector<double> perplexity;
    Tensor<T> probabilities;  // undefined without a quantizer
  };

  Pass forward(const Batch& b, double tau, const RngStream* noise, DropoutContext dropout, bool inference) const {
    if (b.dim != cfg_.encoder.input_dim) {
      throw UsageError("model: batch features have dimension " + std::to_string(b.dim) + ", model expects " +
                       std::to_string(cfg_.encoder.input_dim));
    }
    if (b.masked_rows.empty()) throw UsageError("model: batch has no masked frames");
    std::vector<T> xv(b.frames.begin(), b.frames.end());
    Tensor<T> x({b.batch * b.seq_len, b.dim}, std::move(xv));
    auto z = encoder_->forward(x, b.seq_len, b.masked_rows, dropout);
    Pass out;
    Tensor<T> v = z;
    if (quantizer_) {
      auto q = inference ? quantizer_->inference(z) : quantizer_->train(z, tau, noise);
      v = q.quantized;
      out.probabilities = q.probabilities;
    }
    auto pred = head_->forward(gather_rows(v, b.masked_rows));
    auto recon = l1_loss(gather_rows(x, b.masked_rows), pred);
    double div = 0.0;
    Tensor<T> total = recon;
    if (quantizer_) {
      auto d = diversity_loss(out.probabilities, b.masked_rows, quantizer_->groups());
      div = static_cast<double>(d.item());
      total = add(recon, scale(d, static_cast<T>(cfg_.loss.alpha)));
      const auto pbar = average_rows(out.probabilities, b.masked_rows);
      if (std::all_of(pbar.begin(), pbar.end(), [](double x) { return std::isfinite(x); })) {
        out.perplexity = codebook_perplexity(pbar, quantizer_->groups());
      } else {
        // Left for the caller's non-finite loss check to report.
        out.perplexity.assign(quantizer_->groups(), std::numeric_limits<double>::quiet_NaN());
      }
    }
    out.breakdown = total_loss(static_cast<double>(recon.item()), div, quantizer_ ? cfg_.loss : LossConfig{0.0});
    out.breakdown.recon_elements = b.masked_rows.size() * b.dim;
    out.breakdown.recon_sum = out.breakdown.recon * static_cast<double>(out.breakdown.recon_elements);
    if (!quantizer_) out.breakdown.diversity = std::numeric_limits<double>::quiet_NaN();
    out.loss = total;
    return out;
  }

  /// Frozen representation: no masking, no dropout, no quantizer.
  Tensor<T> extract(const std::vector<float>& frames, std::size_t num_frames) const {
    std::vector<T> xv(frames.begin(), frames.end());
    Tensor<T> x({num_frames, cfg_.encoder.input_dim}, std::move(xv));
    return encoder_->forward(x, num_frames, {});
  }

 private:
  TrainConfig cfg_;
  ParameterSet<T> params_;
  std::unique_ptr<Encoder<T>> encoder_;
  std::unique_ptr<Quantizer<T>> quantizer_;
  std::unique_ptr<ReconstructionHead<T>> head_;
};

}  // namespace decoar
