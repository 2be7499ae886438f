// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary feature files (little-endian):
//   "DC2F" | version u16 = 1 | flags u16 (bit0: labels) | T u32 | F u32 |
//   speaker id (u32 length + UTF-8) | utterance id (u32 length + UTF-8) |
//   T*F float32 row-major | [T u16 labels]
// and the tab-separated corpus manifest (utterance, speaker, relative path).

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "decoar/features/audio.hpp"
#include "decoar/features/feature_sequence.hpp"

namespace decoar {

inline constexpr char kFeatureMagic[4] = {'D', 'C', '2', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;

namespace detail {

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  const unsigned char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw TruncatedError(name_ + ": truncated " + what);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::uint16_t u16(const char* what) { return read_u16le(take(2, what)); }
  std::uint32_t u32(const char* what) { return read_u32le(take(4, what)); }
  std::uint64_t u64(const char* what) {
    const auto* p = take(8, what);
    return std::uint64_t(read_u32le(p)) | (std::uint64_t(read_u32le(p + 4)) << 32);
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    const auto* p = take(n, what);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::string& name() const { return name_; }

 private:
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline void put_u64le(std::string& out, std::uint64_t v) {
  put_u32le(out, static_cast<std::uint32_t>(v));
  put_u32le(out, static_cast<std::uint32_t>(v >> 32));
}
inline void put_str(std::string& out, const std::string& s) {
  put_u32le(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}
inline void put_f32(std::string& out, float v) { put_u32le(out, std::bit_cast<std::uint32_t>(v)); }

}  // namespace detail

inline std::string encode_features(const FeatureSequence& seq) {
  seq.validate();
  std::string out(kFeatureMagic, 4);
  detail::put_u16le(out, kFeatureVersion);
  detail::put_u16le(out, seq.labels ? 1 : 0);
  detail::put_u32le(out, static_cast<std::uint32_t>(seq.num_frames));
  detail::put_u32le(out, static_cast<std::uint32_t>(seq.dim));
  detail::put_str(out, seq.speaker_id);
  detail::put_str(out, seq.utterance_id);
  out.reserve(out.size() + seq.frames.size() * 4 + (seq.labels ? seq.num_frames * 2 : 0));
  for (float v : seq.frames) detail::put_f32(out, v);
  if (seq.labels) {
    for (auto l : *seq.labels) detail::put_u16le(out, l);
  }
  return out;
}

inline FeatureSequence decode_features(const std::string& bytes, const std::string& name = "<memory>") {
  detail::ByteReader r(bytes, name);
  const auto* magic = r.take(4, "magic");
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) throw BadMagicError(name + ": bad feature file magic");
  const std::uint16_t version = r.u16("version");
  if (version != kFeatureVersion) {
    throw VersionMismatchError(name + ": feature file version " + std::to_string(version) + ", expected " +
                               std::to_string(kFeatureVersion));
  }
  const std::uint16_t flags = r.u16("flags");
  FeatureSequence seq;
  seq.num_frames = r.u32("frame count");
  seq.dim = r.u32("feature dimension");
  seq.speaker_id = r.str("speaker id");
  seq.utterance_id = r.str("utterance id");
  if (seq.dim != 0 && seq.num_frames > r.remaining() / 4 / seq.dim) throw TruncatedError(name + ": truncated frame payload");
  const std::size_t n = seq.num_frames * seq.dim;
  const auto* payload = r.take(n * 4, "frame payload");
  seq.frames.resize(n);
  for (std::size_t i = 0; i < n; ++i) seq.frames[i] = std::bit_cast<float>(detail::read_u32le(payload + 4 * i));
  if (flags & 1u) {
    const auto* lp = r.take(seq.num_frames * 2, "label payload");
    seq.labels.emplace(seq.num_frames);
    for (std::size_t t = 0; t < seq.num_frames; ++t) (*seq.labels)[t] = detail::read_u16le(lp + 2 * t);
  }
  if (r.remaining() != 0) throw DataError(name + ": trailing bytes after feature payload");
  seq.validate();
  return seq;
}

inline void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  detail::write_file(path, encode_features(seq));
}

inline FeatureSequence read_features(const std::filesystem::path& path) {
  return decode_features(detail::read_file(path), path.string());
}

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::string relative_path;
  bool operator==(const ManifestEntry&) const = default;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    entries.push_back({fields[0], fields[1], fields[2]});
  }
  return entries;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::string out;
  for (const auto& e : entries) out += e.utterance_id + "\t" + e.speaker_id + "\t" + e.relative_path + "\n";
  detail::write_file(path, out);
}

inline constexpr const char* kManifestName = "manifest.tsv";

/// Writes every sequence as <dir>/<utterance>.dc2f plus <dir>/manifest.tsv.
inline void write_feature_dir(const std::vector<FeatureSequence>& seqs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& s : seqs) {
    const std::string rel = s.utterance_id + ".dc2f";
    write_features(s, dir / rel);
    entries.push_back({s.utterance_id, s.speaker_id, rel});
  }
  write_manifest(entries, dir / kManifestName);
}

/// Reads a directory written by write_feature_dir, in manifest order. The
/// manifest's ids override those stored in the files.
inline std::vector<FeatureSequence> read_feature_dir(const std::filesystem::path& dir) {
  std::vector<FeatureSequence> seqs;
  for (const auto& e : read_manifest(dir / kManifestName)) {
    auto s = read_features(dir / e.relative_path);
    s.utterance_id = e.utterance_id;
    s.speaker_id = e.speaker_id;
    seqs.push_back(std::move(s));
  }
  return seqs;
}

}  // namespace decoar
