// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training configuration, presets and strict JSON (de)serialisation. A config
// file names a preset and overrides any subset of its fields; unknown keys
// are rejected.

#pragma once

#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "decoar/core/optim.hpp"
#include "decoar/encoder/encoder.hpp"
#include "decoar/encoder/masking.hpp"
#include "decoar/features/audio.hpp"
#include "decoar/objectives/objectives.hpp"
#include "decoar/quantizer/quantizer.hpp"

namespace decoar {

struct TrainConfig {
  std::string preset = "desk";
  EncoderConfig encoder;
  MaskConfig mask;
  CodebookConfig codebook;
  LossConfig loss;
  TemperatureSchedule temperature;
  std::size_t batch_size = 4;
  double max_utterance_seconds = 2.0;
  std::int64_t total_steps = 2000;
  std::int64_t warmup_steps = 200;
  double peak_lr = 2e-3;
  double grad_clip_norm = 5.0;
  std::uint64_t rng_seed = 1;
  std::int64_t checkpoint_interval = 0;  // 0: only the final checkpoint
  double heldout_fraction = 0.1;
  bool use_vq = true;

  static TrainConfig desk() {
    TrainConfig c;
    c.codebook.entries_per_codebook = 32;
    c.temperature.decay_factor = 0.9993;
    c.encoder.dropout = 0.1;
    c.resolve();
    return c;
  }

  static TrainConfig paper() {
    TrainConfig c;
    c.preset = "paper";
    c.encoder = EncoderConfig::paper();
    c.codebook = CodebookConfig{};
    c.temperature = TemperatureSchedule{};
    c.batch_size = 128;
    c.max_utterance_seconds = 15.0;
    c.total_steps = 400000;
    c.warmup_steps = 32000;
    c.peak_lr = 3e-4;
    c.resolve();
    return c;
  }

  static TrainConfig from_preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw UsageError("unknown preset '" + name + "' (expected desk or paper)");
  }

  /// Ties derived fields to the encoder shape.
  void resolve() { codebook.output_dim = encoder.model_dim; }

  LrSchedule lr_schedule() const { return {warmup_steps, peak_lr, total_steps}; }

  std::size_t max_frames() const {
    return static_cast<std::size_t>(std::llround(max_utterance_seconds / 0.010));
  }

  void validate() const {
    encoder.validate();
    mask.validate();
    codebook.validate();
    loss.validate();
    temperature.validate();
    lr_schedule().validate();
    if (codebook.output_dim != encoder.model_dim) throw UsageError("config: codebook output_dim must equal model_dim");
    if (batch_size < 1) throw UsageError("config: batch_size must be at least 1");
    if (!(max_utterance_seconds > 0)) throw UsageError("config: max_utterance_seconds must be positive");
    if (max_frames() < mask.span_length) throw UsageError("config: max utterance length is shorter than a mask span");
    if (checkpoint_interval < 0) throw UsageError("config: checkpoint_interval must be >= 0");
    if (!(grad_clip_norm > 0)) throw UsageError("config: grad_clip_norm must be positive");
    if (!(heldout_fraction > 0 && heldout_fraction < 1)) throw UsageError("config: heldout_fraction must lie in (0, 1)");
  }

  bool operator==(const TrainConfig& o) const;
};

namespace detail {

using nlohmann::json;

class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw UsageError(where_ + ": expected a JSON object");
  }
  ~StrictObject() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw UsageError(where_ + ": unknown key '" + it.key() + "'");
    }
  }
  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const json::exception& e) {
      throw UsageError(where_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["encoder"] = {{"input_dim", c.encoder.input_dim},         {"model_dim", c.encoder.model_dim},
                  {"num_blocks", c.encoder.num_blocks},       {"num_heads", c.encoder.num_heads},
                  {"ffn_inner_dim", c.encoder.ffn_inner_dim}, {"conv_kernel", c.encoder.conv_kernel},
                  {"conv_groups", c.encoder.conv_groups},     {"dropout", c.encoder.dropout}};
  j["mask"] = {{"span_length", c.mask.span_length},
               {"target_mask_fraction", c.mask.target_mask_fraction},
               {"rng_seed", c.mask.rng_seed}};
  j["codebook"] = {{"num_codebooks", c.codebook.num_codebooks},
                   {"entries_per_codebook", c.codebook.entries_per_codebook},
                   {"entry_dim", c.codebook.entry_dim}};
  j["loss"] = {{"alpha", c.loss.alpha}};
  j["temperature"] = {{"start", c.temperature.start},
                      {"floor", c.temperature.floor},
                      {"decay_factor", c.temperature.decay_factor}};
  j["batch_size"] = c.batch_size;
  j["max_utterance_seconds"] = c.max_utterance_seconds;
  j["total_steps"] = c.total_steps;
  j["warmup_steps"] = c.warmup_steps;
  j["peak_lr"] = c.peak_lr;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["rng_seed"] = c.rng_seed;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["heldout_fraction"] = c.heldout_fraction;
  j["use_vq"] = c.use_vq;
  return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  std::string preset = "desk";
  if (j.is_object() && j.contains("preset")) {
    if (!j["preset"].is_string()) throw UsageError("config.preset: expected a string");
    preset = j["preset"].get<std::string>();
  }
  TrainConfig c = TrainConfig::from_preset(preset);
  {
    detail::StrictObject o(j, "config");
    o.get("preset", c.preset);
    if (const auto* e = o.child("encoder")) {
      detail::StrictObject s(*e, "config.encoder");
      s.get("input_dim", c.encoder.input_dim);
      s.get("model_dim", c.encoder.model_dim);
      s.get("num_blocks", c.encoder.num_blocks);
      s.get("num_heads", c.encoder.num_heads);
      s.get("ffn_inner_dim", c.encoder.ffn_inner_dim);
      s.get("conv_kernel", c.encoder.conv_kernel);
      s.get("conv_groups", c.encoder.conv_groups);
      s.get("dropout", c.encoder.dropout);
    }
    if (const auto* m = o.child("mask")) {
      detail::StrictObject s(*m, "config.mask");
      s.get("span_length", c.mask.span_length);
      s.get("target_mask_fraction", c.mask.target_mask_fraction);
      s.get("rng_seed", c.mask.rng_seed);
    }
    if (const auto* cb = o.child("codebook")) {
      detail::StrictObject s(*cb, "config.codebook");
      s.get("num_codebooks", c.codebook.num_codebooks);
      s.get("entries_per_codebook", c.codebook.entries_per_codebook);
      s.get("entry_dim", c.codebook.entry_dim);
    }
    if (const auto* l = o.child("loss")) {
      detail::StrictObject s(*l, "config.loss");
      s.get("alpha", c.loss.alpha);
    }
    if (const auto* t = o.child("temperature")) {
      detail::StrictObject s(*t, "config.temperature");
      s.get("start", c.temperature.start);
      s.get("floor", c.temperature.floor);
      s.get("decay_factor", c.temperature.decay_factor);
    }
    o.get("batch_size", c.batch_size);
    o.get("max_utterance_seconds", c.max_utterance_seconds);
    o.get("total_steps", c.total_steps);
    o.get("warmup_steps", c.warmup_steps);
    o.get("peak_lr", c.peak_lr);
    o.get("grad_clip_norm", c.grad_clip_norm);
    o.get("rng_seed", c.rng_seed);
    o.get("checkpoint_interval", c.checkpoint_interval);
    o.get("heldout_fraction", c.heldout_fraction);
    o.get("use_vq", c.use_vq);
  }
  c.resolve();
  c.validate();
  return c;
}

inline TrainConfig parse_config(const std::string& text, const std::string& name = "<config>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(name + ": invalid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return parse_config(text, path.string());
}

inline std::string config_string(const TrainConfig& c) { return to_json(c).dump(); }

inline bool TrainConfig::operator==(const TrainConfig& o) const { return config_string(*this) == config_string(o); }

/// FNV-1a of the canonical JSON serialisation.
inline std::uint64_t config_hash(const TrainConfig& c) { return fnv1a64(config_string(c)); }

}  // namespace decoar
