// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature-space span masking, convolutional positional layer and a stack of
// pre-norm Transformer blocks. Inputs are batches of equal-length sequences
// stacked row-wise as [batch * seq_len, F].

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "decoar/core/nn_ops.hpp"
#include "decoar/core/parameters.hpp"
#include "decoar/encoder/masking.hpp"

namespace decoar {

struct EncoderConfig {
  std::size_t input_dim = 80;
  std::size_t model_dim = 64;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_inner_dim = 256;
  std::size_t conv_kernel = 15;
  std::size_t conv_groups = 4;
  double dropout = 0.1;

  static EncoderConfig desk() { return {}; }
  static EncoderConfig paper() { return {80, 768, 12, 8, 3072, 256, 16, 0.1}; }

  void validate() const {
    if (input_dim == 0 || model_dim == 0 || num_blocks == 0 || num_heads == 0 || ffn_inner_dim == 0 ||
        conv_kernel == 0 || conv_groups == 0) {
      throw UsageError("encoder config: all sizes must be positive");
    }
    if (model_dim % num_heads != 0) throw UsageError("encoder config: model_dim must be divisible by num_heads");
    if (model_dim % conv_groups != 0) throw UsageError("encoder config: conv_groups must divide model_dim");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("encoder config: dropout must lie in [0, 1)");
  }
  bool operator==(const EncoderConfig&) const = default;
};

/// Training-time randomness for one forward pass. A null stream or zero rate
/// disables dropout.
struct DropoutContext {
  double rate = 0.0;
  RngStream* rng = nullptr;
  bool active() const { return rate > 0.0 && rng != nullptr; }
};

template <class T>
Tensor<T> dropout(const Tensor<T>& x, DropoutContext& ctx) {
  if (!ctx.active()) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - ctx.rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = ctx.rng->uniform() < ctx.rate ? T(0) : keep_scale;
  return mul_const(x, std::move(mask));
}

template <class T>
struct TransformerBlock {
  Tensor<T> ln1_gain, ln1_bias, qkv_weight, qkv_bias, out_weight, out_bias;
  Tensor<T> ln2_gain, ln2_bias, ffn1_weight, ffn1_bias, ffn2_weight, ffn2_bias;
};

template <class T>
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParameterSet<T>& params, RngStream& init_rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t f = cfg.input_dim, d = cfg.model_dim, ffn = cfg.ffn_inner_dim;
    auto glorot = [&](Shape s, std::size_t fan_in, std::size_t fan_out) {
      return uniform_init<T>(std::move(s), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), init_rng);
    };
    auto zeros = [](std::size_t n) { return constant_init<T>({n}, T(0)); };
    auto ones = [](std::size_t n) { return constant_init<T>({n}, T(1)); };

    std::vector<T> mv(f);
    for (auto& v : mv) v = static_cast<T>(init_rng.uniform());
    mask_vector_ = params.add("encoder.mask_vector", Tensor<T>({f}, std::move(mv)));
    proj_weight_ = params.add("encoder.proj.weight", glorot({f, d}, f, d));
    proj_bias_ = params.add("encoder.proj.bias", zeros(d));
    const std::size_t conv_fan_in = (d / cfg.conv_groups) * cfg.conv_kernel;
    conv_weight_ = params.add("encoder.conv.weight",
                              uniform_init<T>({d, d / cfg.conv_groups, cfg.conv_kernel},
                                              1.0 / std::sqrt(static_cast<double>(conv_fan_in)), init_rng));
    conv_bias_ = params.add("encoder.conv.bias", zeros(d));
    pos_ln_gain_ = params.add("encoder.conv_ln.gain", ones(d));
    pos_ln_bias_ = params.add("encoder.conv_ln.bias", zeros(d));
    for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
      const std::string p = "encoder.block" + std::to_string(i) + ".";
      TransformerBlock<T> b;
      b.ln1_gain = params.add(p + "ln1.gain", ones(d));
      b.ln1_bias = params.add(p + "ln1.bias", zeros(d));
      b.qkv_weight = params.add(p + "attn.qkv.weight", glorot({d, 3 * d}, d, d));
      b.qkv_bias = params.add(p + "attn.qkv.bias", zeros(3 * d));
      b.out_weight = params.add(p + "attn.out.weight", glorot({d, d}, d, d));
      b.out_bias = params.add(p + "attn.out.bias", zeros(d));
      b.ln2_gain = params.add(p + "ln2.gain", ones(d));
      b.ln2_bias = params.add(p + "ln2.bias", zeros(d));
      b.ffn1_weight = params.add(p + "ffn1.weight", glorot({d, ffn}, d, ffn));
      b.ffn1_bias = params.add(p + "ffn1.bias", zeros(ffn));
      b.ffn2_weight = params.add(p + "ffn2.weight", glorot({ffn, d}, ffn, d));
      b.ffn2_bias = params.add(p + "ffn2.bias", zeros(d));
      blocks_.push_back(b);
    }
    final_ln_gain_ = params.add("encoder.final_ln.gain", ones(d));
    final_ln_bias_ = params.add("encoder.final_ln.bias", zeros(d));
  }

  const EncoderConfig& config() const { return cfg_; }
  const Tensor<T>& mask_vector() const { return mask_vector_; }
  const Tensor<T>& conv_weight() const { return conv_weight_; }
  const Tensor<T>& conv_bias() const { return conv_bias_; }
  const Tensor<T>& proj_weight() const { return proj_weight_; }
  const Tensor<T>& proj_bias() const { return proj_bias_; }
  const std::vector<TransformerBlock<T>>& blocks() const { return blocks_; }

  /// Masks the frames at `masked_rows` (indices into the stacked batch).
  Tensor<T> mask(const Tensor<T>& features, const std::vector<std::size_t>& masked_rows) const {
    if (masked_rows.empty()) return features;
    return replace_rows(features, masked_rows, mask_vector_);
  }

  /// layernorm(p + gelu(conv(p))) with p the projection of the input to d.
  Tensor<T> positional(const Tensor<T>& features, std::size_t seq_len) const {
    check_input(features, seq_len);
    auto p = linear(features, proj_weight_, proj_bias_);
    auto c = gelu(conv1d_same(p, conv_weight_, conv_bias_, seq_len, cfg_.conv_groups));
    return layer_norm(add(p, c), pos_ln_gain_, pos_ln_bias_);
  }

  Tensor<T> block(std::size_t i, const Tensor<T>& x, std::size_t seq_len, DropoutContext ctx = {}) const {
    const auto& b = blocks_.at(i);
    auto h = layer_norm(x, b.ln1_gain, b.ln1_bias);
    auto attn = multi_head_attention(linear(h, b.qkv_weight, b.qkv_bias), seq_len, cfg_.num_heads);
    auto x1 = add(x, dropout(linear(attn, b.out_weight, b.out_bias), ctx));
    auto h2 = layer_norm(x1, b.ln2_gain, b.ln2_bias);
    auto ff = linear(gelu(linear(h2, b.ffn1_weight, b.ffn1_bias)), b.ffn2_weight, b.ffn2_bias);
    return add(x1, dropout(ff, ctx));
  }

  /// Transformer stack plus final layer norm.
  Tensor<T> transformer(const Tensor<T>& x, std::size_t seq_len, DropoutContext ctx = {}) const {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) h = block(i, h, seq_len, ctx);
    return layer_norm(h, final_ln_gain_, final_ln_bias_);
  }

  /// Latent sequence z for (optionally masked) features.
  Tensor<T> forward(const Tensor<T>& features, std::size_t seq_len, const std::vector<std::size_t>& masked_rows,
                    DropoutContext ctx = {}) const {
    return transformer(positional(mask(features, masked_rows), seq_len), seq_len, ctx);
  }

 private:
  void check_input(const Tensor<T>& features, std::size_t seq_len) const {
    if (features.rank() != 2 || features.dim(1) != cfg_.input_dim) {
      throw UsageError("encoder: expected [N, " + std::to_string(cfg_.input_dim) + "] features, got " +
                       shape_str(features.shape()));
    }
    if (seq_len == 0 || features.dim(0) % seq_len != 0) {
      throw UsageError("encoder: row count is not a multiple of the sequence length");
    }
  }

  EncoderConfig cfg_;
  Tensor<T> mask_vector_, proj_weight_, proj_bias_, conv_weight_, conv_bias_, pos_ln_gain_, pos_ln_bias_;
  std::vector<TransformerBlock<T>> blocks_;
  Tensor<T> final_ln_gain_, final_ln_bias_;
};

}  // namespace decoar
