// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Probe reports: held-out frame accuracy, confusion counts and, for frozen
// features with a code table, hard-code diagnostics.

#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "decoar/pipeline/extract.hpp"
#include "decoar/pipeline/probe.hpp"
#include "decoar/pipeline/trainer.hpp"

namespace decoar {

struct ProbeReport {
  std::string features = "frozen";  // or "raw"
  std::size_t num_classes = 0;
  double accuracy = 0;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted], held-out frames
  std::vector<std::uint64_t> unit_frames;             // held-out frames per true unit
  std::vector<double> perplexities;                   // per codebook; empty without codes
  double purity = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> config_hashes;
  std::size_t train_utterances = 0, heldout_utterances = 0;
  std::int64_t probe_steps = 0;
};

inline std::size_t count_classes(const std::vector<FeatureSequence>& seqs) {
  std::size_t n = 0;
  for (const auto& s : seqs) {
    if (!s.labels) throw DataError("utterance " + s.utterance_id + " has no frame labels");
    for (auto l : *s.labels) n = std::max<std::size_t>(n, l + 1u);
  }
  return n;
}

/// Splits by utterance (the pre-training split), trains the probe and scores
/// the held-out part. Codes, when given, are looked up by utterance id.
inline ProbeReport probe_report(const std::vector<FeatureSequence>& seqs, std::size_t num_classes,
                                const CodeTable* codes = nullptr, const ProbeConfig& cfg = {},
                                double heldout_fraction = 0.1) {
  const auto split = split_corpus(seqs, heldout_fraction);
  const auto res = train_probe(stack_frames(split.train), stack_frames(split.heldout), num_classes, cfg);
  ProbeReport r;
  r.num_classes = num_classes;
  r.accuracy = res.accuracy;
  r.confusion = res.confusion;
  r.probe_steps = res.steps;
  r.train_utterances = split.train.size();
  r.heldout_utterances = split.heldout.size();
  r.unit_frames.assign(num_classes, 0);
  for (const auto& s : split.heldout)
    for (auto l : *s.labels) ++r.unit_frames[l];
  if (codes) {
    std::vector<std::vector<std::uint32_t>> held;
    std::vector<std::uint64_t> joint;
    std::vector<std::uint32_t> labels;
    for (const auto& s : split.heldout) {
      const auto it = codes->codes.find(s.utterance_id);
      if (it == codes->codes.end()) throw DataError("code table has no entry for " + s.utterance_id);
      if (it->second.size() != s.num_frames * codes->groups) {
        throw DataError("code table entry for " + s.utterance_id + " does not match its frame count");
      }
      held.push_back(it->second);
      for (auto k : joint_codes(it->second, codes->groups, codes->entries)) joint.push_back(k);
      for (auto l : *s.labels) labels.push_back(l);
    }
    r.perplexities = code_usage_perplexity(held, codes->groups, codes->entries);
    r.purity = cluster_purity(joint, labels);
  }
  return r;
}

inline CodeTable code_table(const Extraction& e) {
  CodeTable t;
  t.groups = e.groups;
  t.entries = e.entries;
  for (std::size_t i = 0; i < e.codes.size(); ++i) t.codes[e.latents[i].utterance_id] = e.codes[i];
  return t;
}

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

/// Long format: kind,row,col,value.
inline std::string probe_report_csv(const ProbeReport& r) {
  std::string s = "kind,row,col,value\n";
  s += "features,,," + r.features + "\n";
  s += "accuracy,,," + detail::fmt(r.accuracy) + "\n";
  s += "purity,,," + detail::fmt(r.purity) + "\n";
  for (std::size_t g = 0; g < r.perplexities.size(); ++g)
    s += "perplexity," + std::to_string(g) + ",," + detail::fmt(r.perplexities[g]) + "\n";
  for (std::size_t u = 0; u < r.unit_frames.size(); ++u)
    s += "unit_frames," + std::to_string(u) + ",," + std::to_string(r.unit_frames[u]) + "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t)
    for (std::size_t p = 0; p < r.confusion[t].size(); ++p)
      s += "confusion," + std::to_string(t) + "," + std::to_string(p) + "," + std::to_string(r.confusion[t][p]) + "\n";
  for (auto seed : r.seeds) s += "seed,,," + std::to_string(seed) + "\n";
  for (auto h : r.config_hashes) s += "config_hash,,," + detail::hex64(h) + "\n";
  return s;
}

inline std::string probe_report_text(const ProbeReport& r) {
  char buf[256];
  std::string s = "Linear probe on " + r.features + " features\n";
  std::snprintf(buf, sizeof buf, "  utterances: %zu train, %zu held-out; %zu classes; %lld probe steps\n",
                r.train_utterances, r.heldout_utterances, r.num_classes, static_cast<long long>(r.probe_steps));
  s += buf;
  std::snprintf(buf, sizeof buf, "  held-out frame accuracy: %.4f\n", r.accuracy);
  s += buf;
  if (!r.perplexities.empty()) {
    s += "  code usage perplexity:";
    for (double p : r.perplexities) {
      std::snprintf(buf, sizeof buf, " %.2f", p);
      s += buf;
    }
    std::snprintf(buf, sizeof buf, "\n  cluster purity: %.4f\n", r.purity);
    s += buf;
  }
  s += "  per-unit accuracy:\n";
  for (std::size_t u = 0; u < r.confusion.size(); ++u) {
    const double n = static_cast<double>(r.unit_frames[u]);
    std::snprintf(buf, sizeof buf, "    unit %zu: %.4f (%llu frames)\n", u, n > 0 ? r.confusion[u][u] / n : 0.0,
                  static_cast<unsigned long long>(r.unit_frames[u]));
    s += buf;
  }
  for (auto seed : r.seeds) s += "  seed: " + std::to_string(seed) + "\n";
  for (auto h : r.config_hashes) s += "  config hash: " + detail::hex64(h) + "\n";
  return s;
}

}  // namespace decoar
