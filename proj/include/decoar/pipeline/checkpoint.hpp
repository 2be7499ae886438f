// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint files (little-endian):
//   "DC2C" | version u16 | reserved u16 | step u64 | config JSON (u32 length + bytes) |
//   blob count u32 | { name | rank u32 | dims u32... | float32 values } |
//   adam: step u64 | beta1, beta2, eps f64 | count u32 | { name | n u64 | m f32[n] | v f32[n] } |
//   stream count u32 | { name | key u64 | counter u64 } |
//   FNV-1a 64 of every preceding byte (u64)

#pragma once

#include <bit>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "decoar/features/feature_io.hpp"
#include "decoar/pipeline/trainer.hpp"

namespace decoar {

inline constexpr char kCheckpointMagic[4] = {'D', 'C', '2', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointBlob {
  std::string name;
  Shape shape;
  std::vector<float> values;
  bool operator==(const CheckpointBlob&) const = default;
};

struct Checkpoint {
  std::int64_t step = 0;
  TrainConfig config;
  std::vector<CheckpointBlob> blobs;
  AdamState optimizer;
  std::vector<std::pair<std::string, RngStream>> streams;
};

namespace detail {

inline void put_f64(std::string& out, double v) { put_u64le(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_floats(std::string& out, const std::vector<float>& v) {
  const std::size_t at = out.size();
  out.resize(at + 4 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(v[i]);
    for (int k = 0; k < 4; ++k) out[at + 4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
  }
}

inline std::vector<float> take_floats(ByteReader& r, std::size_t n, const char* what) {
  if (n > r.remaining() / 4) throw TruncatedError(r.name() + ": truncated " + what);
  const auto* p = r.take(4 * n, what);
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(read_u32le(p + 4 * i));
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u16le(out, kCheckpointVersion);
  detail::put_u16le(out, 0);
  detail::put_u64le(out, static_cast<std::uint64_t>(c.step));
  detail::put_str(out, config_string(c.config));
  detail::put_u32le(out, static_cast<std::uint32_t>(c.blobs.size()));
  for (const auto& b : c.blobs) {
    detail::put_str(out, b.name);
    detail::put_u32le(out, static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) detail::put_u32le(out, static_cast<std::uint32_t>(d));
    detail::put_floats(out, b.values);
  }
  const auto& a = c.optimizer;
  detail::put_u64le(out, static_cast<std::uint64_t>(a.step));
  detail::put_f64(out, a.beta1);
  detail::put_f64(out, a.beta2);
  detail::put_f64(out, a.epsilon);
  detail::put_u32le(out, static_cast<std::uint32_t>(a.names.size()));
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    detail::put_str(out, a.names[i]);
    detail::put_u64le(out, a.first_moment[i].size());
    detail::put_floats(out, a.first_moment[i]);
    detail::put_floats(out, a.second_moment[i]);
  }
  detail::put_u32le(out, static_cast<std::uint32_t>(c.streams.size()));
  for (const auto& [name, s] : c.streams) {
    detail::put_str(out, name);
    detail::put_u64le(out, s.key());
    detail::put_u64le(out, s.counter());
  }
  detail::put_u64le(out, fnv1a64(out));
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name = "<memory>") {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw BadMagicError(name + ": not a checkpoint file (bad magic)");
  }
  if (bytes.size() < 6) throw TruncatedError(name + ": truncated checkpoint header");
  const auto version = detail::read_u16le(reinterpret_cast<const unsigned char*>(bytes.data()) + 4);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError(name + ": checkpoint version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < 4 + 2 + 2 + 8 + 8) throw TruncatedError(name + ": truncated checkpoint");
  const std::string body = bytes.substr(0, bytes.size() - 8);
  {
    detail::ByteReader tail(bytes, name);
    tail.take(bytes.size() - 8, "body");
    if (tail.u64("checksum") != fnv1a64(body)) throw ChecksumError(name + ": checkpoint checksum mismatch");
  }

  detail::ByteReader r(body, name);
  r.take(8, "header");
  Checkpoint c;
  c.step = static_cast<std::int64_t>(r.u64("step"));
  try {
    c.config = parse_config(r.str("config"), name + " (embedded config)");
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
  const std::uint32_t nblobs = r.u32("blob count");
  for (std::uint32_t i = 0; i < nblobs; ++i) {
    CheckpointBlob b;
    b.name = r.str("blob name");
    const std::uint32_t rank = r.u32("blob rank");
    if (rank == 0 || rank > 8) throw DataError(name + ": blob " + b.name + " has invalid rank");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      b.shape.push_back(r.u32("blob shape"));
      if (b.shape.back() != 0 && n > r.remaining() / b.shape.back()) throw TruncatedError(name + ": truncated blob");
      n *= b.shape.back();
    }
    b.values = detail::take_floats(r, n, "blob values");
    c.blobs.push_back(std::move(b));
  }
  auto& a = c.optimizer;
  a.step = static_cast<std::int64_t>(r.u64("optimizer step"));
  a.beta1 = std::bit_cast<double>(r.u64("beta1"));
  a.beta2 = std::bit_cast<double>(r.u64("beta2"));
  a.epsilon = std::bit_cast<double>(r.u64("epsilon"));
  const std::uint32_t nmom = r.u32("moment count");
  for (std::uint32_t i = 0; i < nmom; ++i) {
    a.names.push_back(r.str("moment name"));
    const std::uint64_t n = r.u64("moment size");
    a.first_moment.push_back(detail::take_floats(r, n, "first moment"));
    a.second_moment.push_back(detail::take_floats(r, n, "second moment"));
  }
  const std::uint32_t nstreams = r.u32("stream count");
  for (std::uint32_t i = 0; i < nstreams; ++i) {
    auto sname = r.str("stream name");
    const auto key = r.u64("stream key");
    const auto counter = r.u64("stream counter");
    c.streams.emplace_back(std::move(sname), RngStream::from_state(key, counter));
  }
  if (r.remaining() != 0) throw DataError(name + ": trailing bytes before checkpoint checksum");
  return c;
}

template <class T>
std::vector<CheckpointBlob> parameter_blobs(const ParameterSet<T>& params) {
  std::vector<CheckpointBlob> blobs;
  for (const auto& p : params) {
    blobs.push_back({p.name, p.tensor.shape(), std::vector<float>(p.tensor.values().begin(), p.tensor.values().end())});
  }
  return blobs;
}

/// Copies blobs into a parameter set; every parameter must be present with
/// its shape, and no unknown blob may appear.
template <class T>
void load_parameters(ParameterSet<T>& params, const std::vector<CheckpointBlob>& blobs) {
  for (auto& p : params) {
    const CheckpointBlob* found = nullptr;
    for (const auto& b : blobs) {
      if (b.name == p.name) found = &b;
    }
    if (!found) throw MissingBlobError("checkpoint has no blob for parameter " + p.name);
    if (found->shape != p.tensor.shape()) {
      throw DataError("checkpoint blob " + p.name + " has shape " + shape_str(found->shape) + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(found->values[i]);
  }
  for (const auto& b : blobs) {
    if (!params.find(b.name)) throw DataError("checkpoint blob " + b.name + " does not belong to this model");
  }
}

inline Checkpoint snapshot(const Trainer& t) {
  Checkpoint c;
  c.step = t.step();
  c.config = t.config();
  c.blobs = parameter_blobs(t.model().params());
  c.optimizer = t.optimizer();
  c.streams = t.streams();
  return c;
}

/// Restores parameters, optimizer and step into a trainer built from the
/// checkpoint's own config.
inline void restore(Trainer& t, const Checkpoint& c) {
  if (!(t.config() == c.config)) throw DataError("checkpoint config differs from the trainer config");
  load_parameters(t.model().params(), c.blobs);
  const auto& a = c.optimizer;
  const auto& params = t.model().params();
  if (a.names.size() != params.size()) throw DataError("checkpoint optimizer state does not match the model");
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    if (a.names[i] != params[i].name || a.first_moment[i].size() != params[i].tensor.numel()) {
      throw DataError("checkpoint optimizer entry " + a.names[i] + " does not match the model");
    }
  }
  if (c.streams != t.streams()) throw DataError("checkpoint random stream states do not match its config seed");
  t.optimizer() = a;
  t.set_step(c.step);
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

/// Inference model with the checkpoint's parameters.
inline std::unique_ptr<Model<float>> model_from_checkpoint(const Checkpoint& c) {
  auto m = std::make_unique<Model<float>>(c.config, c.config.rng_seed);
  load_parameters(m->params(), c.blobs);
  return m;
}

}  // namespace decoar
