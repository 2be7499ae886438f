// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mono RIFF/WAVE input (16-bit PCM or 32-bit float) and 16-bit output.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "decoar/core/error.hpp"

namespace decoar {

struct AudioClip {
  std::vector<float> samples;
  std::uint32_t sample_rate = 16000;
  std::string speaker_id;
  std::string utterance_id;

  void validate() const {
    if (samples.empty()) throw DataError("audio clip '" + utterance_id + "' has no samples");
    if (sample_rate == 0) throw DataError("audio clip '" + utterance_id + "' has zero sample rate");
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace detail

/// Speaker and utterance ids from a file name of the form "<speaker>-<rest>.wav".
/// Without a '-', the speaker id is the whole stem.
inline void ids_from_filename(const std::filesystem::path& path, std::string& speaker,
                              std::string& utterance) {
  utterance = path.stem().string();
  const auto dash = utterance.find('-');
  speaker = dash == std::string::npos ? utterance : utterance.substr(0, dash);
}

/// Decodes a WAV byte buffer. 16-bit PCM is scaled by 1/32768.
inline AudioClip decode_wav(const std::string& bytes, const std::string& name = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12) throw TruncatedError(name + ": truncated RIFF header");
  if (std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw BadMagicError(name + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = detail::read_u32le(p + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw TruncatedError(name + ": truncated fmt chunk");
      format = detail::read_u16le(p + body);
      channels = detail::read_u16le(p + body + 2);
      rate = detail::read_u32le(p + body + 4);
      bits = detail::read_u16le(p + body + 14);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: real tag leads the sub-format GUID
        if (size < 40) throw TruncatedError(name + ": truncated extensible fmt chunk");
        format = detail::read_u16le(p + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError(name + ": data chunk before fmt chunk");
      if (channels != 1) {
        throw DataError(name + ": " + std::to_string(channels) + " channels, only mono is supported");
      }
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32) {
        throw DataError(name + ": unsupported encoding (format " + std::to_string(format) + ", " +
                        std::to_string(bits) + " bits)");
      }
      if (body + size > bytes.size()) throw TruncatedError(name + ": truncated data chunk");
      const std::size_t width = bits / 8;
      if (size % width != 0) throw TruncatedError(name + ": partial sample in data chunk");
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(size / width);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const unsigned char* s = p + body + i * width;
        if (pcm16) {
          const auto v = static_cast<std::int16_t>(detail::read_u16le(s));
          clip.samples[i] = static_cast<float>(v) / 32768.0f;
        } else {
          clip.samples[i] = std::bit_cast<float>(detail::read_u32le(s));
        }
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw TruncatedError(name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  AudioClip clip = decode_wav(detail::read_file(path), path.string());
  ids_from_filename(path, clip.speaker_id, clip.utterance_id);
  clip.validate();
  return clip;
}

/// Quantizes to 16-bit PCM with rounding and clipping to [-32768, 32767].
inline std::string encode_wav16(const AudioClip& clip) {
  std::string out = "RIFF";
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  detail::put_u32le(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, 1);
  detail::put_u32le(out, clip.sample_rate);
  detail::put_u32le(out, clip.sample_rate * 2);
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, data_bytes);
  for (float s : clip.samples) {
    const double scaled = std::nearbyint(static_cast<double>(s) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    detail::put_u16le(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

inline void write_wav16(const AudioClip& clip, const std::filesystem::path& path) {
  detail::write_file(path, encode_wav16(clip));
}

}  // namespace decoar
