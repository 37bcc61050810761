// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal RIFF/WAVE reader and writer. Only the format this toolkit
// produces and consumes is supported: PCM, 16-bit, mono, little-endian.
// Anything else is rejected with a message naming the offending field.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "wali/errors.hpp"

namespace wali {

struct Wav {
  std::vector<double> samples;  // full scale is 1.0 == 32767 counts
  int64_t sample_rate = 0;
};

namespace detail {

inline void put_u16(std::string& b, uint32_t v) {
  b.push_back(char(v & 0xff));
  b.push_back(char((v >> 8) & 0xff));
}

inline void put_u32(std::string& b, uint32_t v) {
  put_u16(b, v & 0xffff);
  put_u16(b, v >> 16);
}

inline uint32_t get_u16(const std::string& b, size_t at) {
  return uint32_t(uint8_t(b[at])) | uint32_t(uint8_t(b[at + 1])) << 8;
}

inline uint32_t get_u32(const std::string& b, size_t at) {
  return get_u16(b, at) | get_u16(b, at + 2) << 16;
}

}  // namespace detail

// Quantizes to 16-bit PCM, clamping values outside [-1, 1] to full scale.
inline void write_wav(const std::string& path, const std::vector<double>& x, int64_t sample_rate) {
  if (sample_rate < 1) {
    throw IoError("write_wav: sample rate must be positive");
  }
  const uint32_t data_bytes = uint32_t(2 * x.size());
  std::string b;
  b.reserve(44 + data_bytes);
  b += "RIFF";
  detail::put_u32(b, 36 + data_bytes);
  b += "WAVEfmt ";
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, uint32_t(sample_rate));
  detail::put_u32(b, uint32_t(sample_rate) * 2);
  detail::put_u16(b, 2);   // block align
  detail::put_u16(b, 16);  // bits per sample
  b += "data";
  detail::put_u32(b, data_bytes);
  for (double v : x) {
    const double c = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
    detail::put_u16(b, uint32_t(uint16_t(int16_t(std::llround(c * 32767.0)))));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !f.write(b.data(), std::streamsize(b.size()))) {
    throw IoError("write_wav: cannot write " + path);
  }
}

// The exact inverse of write_wav's quantization: counts divided by 32767,
// so write -> read -> write reproduces a file byte for byte.
inline Wav read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("read_wav: cannot open " + path);
  }
  std::string b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) {
    throw IoError("read_wav: " + path + " is not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  Wav out;
  // Chunks other than fmt and data (LIST, fact, ...) are skipped. Chunk
  // bodies are padded to even length per RIFF.
  for (size_t at = 12; at + 8 <= b.size();) {
    const std::string id = b.substr(at, 4);
    const size_t len = detail::get_u32(b, at + 4);
    at += 8;
    if (at + len > b.size()) {
      throw IoError("read_wav: " + path + ": truncated " + id + " chunk");
    }
    if (id == "fmt ") {
      if (len < 16) {
        throw IoError("read_wav: " + path + ": fmt chunk too short");
      }
      const uint32_t format = detail::get_u16(b, at);
      const uint32_t channels = detail::get_u16(b, at + 2);
      const uint32_t bits = detail::get_u16(b, at + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw IoError("read_wav: " + path + ": need PCM 16-bit mono, got format " +
                      std::to_string(format) + ", " + std::to_string(channels) +
                      " channel(s), " + std::to_string(bits) + " bits");
      }
      out.sample_rate = int64_t(detail::get_u32(b, at + 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) {
        throw IoError("read_wav: " + path + ": data chunk before fmt");
      }
      out.samples.reserve(len / 2);
      for (size_t i = 0; i + 2 <= len; i += 2) {
        out.samples.push_back(double(int16_t(detail::get_u16(b, at + i))) / 32767.0);
      }
      return out;
    }
    at += len + (len & 1);
  }
  throw IoError("read_wav: " + path + ": no data chunk");
}

}  // namespace wali
