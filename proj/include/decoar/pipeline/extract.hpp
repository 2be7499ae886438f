// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen-encoder feature extraction and the hard-code diagnostics that go
// with it.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "decoar/features/feature_io.hpp"
#include "decoar/pipeline/model.hpp"

namespace decoar {

struct Extraction {
  std::vector<FeatureSequence> latents;  // z per utterance, labels copied from the input
  std::size_t groups = 0;                // 0 when the model has no quantizer
  std::size_t entries = 0;
  std::vector<std::vector<std::uint32_t>> codes;  // [utterance][frame * groups + g]
};

/// Runs every utterance through the encoder without masking. Codes are the
/// deterministic quantizer choice for each z; they are diagnostics only and
/// the latents never pass through the quantizer.
template <class T>
Extraction extract_features(const Model<T>& model, const std::vector<FeatureSequence>& seqs) {
  Extraction out;
  const auto* q = model.quantizer();
  if (q) {
    out.groups = q->groups();
    out.entries = q->config().entries_per_codebook;
  }
  for (const auto& s : seqs) {
    s.validate();
    if (s.dim != model.config().encoder.input_dim) {
      throw UsageError("extract: utterance " + s.utterance_id + " has dimension " + std::to_string(s.dim) +
                       ", checkpoint expects " + std::to_string(model.config().encoder.input_dim));
    }
    const auto z = model.extract(s.frames, s.num_frames);
    FeatureSequence f;
    f.num_frames = s.num_frames;
    f.dim = z.dim(1);
    f.frames.assign(z.values().begin(), z.values().end());
    f.frame_shift = s.frame_shift;
    f.frame_length = s.frame_length;
    f.speaker_id = s.speaker_id;
    f.utterance_id = s.utterance_id;
    f.labels = s.labels;
    out.latents.push_back(std::move(f));
    if (q) out.codes.push_back(q->inference(z).indices);
  }
  return out;
}

/// exp(entropy) of each codebook's hard usage histogram.
inline std::vector<double> code_usage_perplexity(const std::vector<std::vector<std::uint32_t>>& codes,
                                                 std::size_t groups, std::size_t entries) {
  if (groups == 0) return {};
  std::vector<std::vector<double>> counts(groups, std::vector<double>(entries, 0.0));
  double frames = 0;
  for (const auto& u : codes) {
    if (u.size() % groups != 0) throw DataError("code table row is not a multiple of the codebook count");
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (u[i] >= entries) throw DataError("code index out of range");
      counts[i % groups][u[i]] += 1;
    }
    frames += static_cast<double>(u.size() / groups);
  }
  if (frames == 0) throw DataError("no codes to measure");
  std::vector<double> ppl;
  for (const auto& c : counts) {
    double h = 0;
    for (double n : c) {
      if (n > 0) h -= (n / frames) * std::log(n / frames);
    }
    ppl.push_back(std::exp(h));
  }
  return ppl;
}

/// One integer per frame combining the G indices.
inline std::vector<std::uint64_t> joint_codes(const std::vector<std::uint32_t>& codes, std::size_t groups,
                                              std::size_t entries) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i + groups <= codes.size(); i += groups) {
    std::uint64_t k = 0;
    for (std::size_t g = 0; g < groups; ++g) k = k * entries + codes[i + g];
    out.push_back(k);
  }
  return out;
}

inline constexpr const char* kCodesName = "codes.tsv";

/// Header line "groups<TAB>entries", then one line per utterance:
/// id<TAB>space-separated indices (frame-major).
inline void write_codes(const Extraction& e, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << e.groups << '\t' << e.entries << '\n';
  for (std::size_t i = 0; i < e.codes.size(); ++i) {
    out << e.latents[i].utterance_id << '\t';
    for (std::size_t k = 0; k < e.codes[i].size(); ++k) out << (k ? " " : "") << e.codes[i][k];
    out << '\n';
  }
  if (!out) throw DataError("error writing " + path.string());
}

struct CodeTable {
  std::size_t groups = 0, entries = 0;
  std::map<std::string, std::vector<std::uint32_t>> codes;
};

inline CodeTable read_codes(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  CodeTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty code table");
  if (std::sscanf(line.c_str(), "%zu\t%zu", &t.groups, &t.entries) != 2 || t.groups == 0 || t.entries == 0) {
    throw DataError(path.string() + ": malformed code table header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": malformed code table line");
    std::istringstream row(line.substr(tab + 1));
    std::vector<std::uint32_t> v;
    long long x;
    while (row >> x) {
      if (x < 0 || static_cast<std::size_t>(x) >= t.entries) throw DataError(path.string() + ": code out of range");
      v.push_back(static_cast<std::uint32_t>(x));
    }
    if (!row.eof()) throw DataError(path.string() + ": non-numeric code");
    if (v.size() % t.groups != 0) throw DataError(path.string() + ": code row is not a multiple of the group count");
    t.codes[line.substr(0, tab)] = std::move(v);
  }
  return t;
}

}  // namespace decoar
