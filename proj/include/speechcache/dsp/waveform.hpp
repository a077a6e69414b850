/* Copyright 2026 The SpeechCache Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SPEECHCACHE_DSP_WAVEFORM_HPP_
#define SPEECHCACHE_DSP_WAVEFORM_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/types.hpp"

namespace speechcache::dsp {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct FrameSpec {
  std::size_t window_len = 401;
  std::size_t hop = 80;
};

inline void validate(const FrameSpec& spec) {
  SC_CHECK(spec.hop > 0 && spec.hop <= spec.window_len, ErrorCode::kShapeError,
           "frame spec requires 0 < hop <= window_len");
}

inline std::size_t frame_count(std::size_t n_samples, const FrameSpec& spec) {
  if (n_samples < spec.window_len) return 0;
  return (n_samples - spec.window_len) / spec.hop + 1;
}

inline std::vector<float> hamming_window(std::size_t n) {
  std::vector<float> w(n, 1.0f);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = static_cast<float>(
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1)));
  }
  return w;
}

inline void check_finite(const Waveform& wave) {
  SC_CHECK(wave.sample_rate > 0, ErrorCode::kInvalidAudio,
           "sample rate must be positive");
  for (float s : wave.samples) {
    SC_CHECK(std::isfinite(s), ErrorCode::kInvalidAudio,
             "waveform contains non-finite samples");
  }
}

// Hamming-tapered frames, one per row. Frame i covers
// samples [i * hop, i * hop + window_len).
inline RowMatrix<float> frame(const Waveform& wave, const FrameSpec& spec) {
  validate(spec);
  const std::size_t n_frames = frame_count(wave.samples.size(), spec);
  SC_CHECK(n_frames > 0, ErrorCode::kInputTooShort,
           "waveform of " + std::to_string(wave.samples.size()) +
               " samples is shorter than one window of " +
               std::to_string(spec.window_len));
  const auto window = hamming_window(spec.window_len);
  RowMatrix<float> frames(n_frames, spec.window_len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const float* src = wave.samples.data() + t * spec.hop;
    for (std::size_t i = 0; i < spec.window_len; ++i) {
      frames(t, i) = src[i] * window[i];
    }
  }
  return frames;
}

// 16-bit PCM mono RIFF/WAVE.
inline void write_wav(const std::string& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  SC_CHECK(out.good(), ErrorCode::kIo, "cannot open " + path);
  auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(wave.sample_rate));
  put32(static_cast<std::uint32_t>(wave.sample_rate * 2));
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (float s : wave.samples) {
    const float c = std::fmax(-1.0f, std::fmin(1.0f, s));
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lrint(c * 32767.0f))));
  }
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SC_CHECK(in.good(), ErrorCode::kIo, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  auto u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  auto u16 = [&](std::size_t off) {
    std::uint16_t v;
    std::memcpy(&v, bytes.data() + off, 2);
    return v;
  };
  SC_CHECK(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
               std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
           ErrorCode::kFormat, path + " is not a RIFF/WAVE file");
  Waveform wave;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = u32(pos + 4);
    const char* id = bytes.data() + pos;
    const std::size_t body = pos + 8;
    SC_CHECK(body + size <= bytes.size(), ErrorCode::kFormat, "truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      SC_CHECK(u16(body) == 1 && u16(body + 2) == 1 && u16(body + 14) == 16,
               ErrorCode::kFormat, path + ": only 16-bit PCM mono is supported");
      wave.sample_rate = static_cast<int>(u32(body + 4));
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      SC_CHECK(have_fmt, ErrorCode::kFormat, path + ": data chunk before fmt");
      wave.samples.resize(size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        wave.samples[i] = static_cast<std::int16_t>(u16(body + 2 * i)) / 32768.0f;
      }
      return wave;
    }
    pos = body + size + (size & 1);
  }
  throw Error(ErrorCode::kFormat, path + ": no data chunk");
}

// Raw little-endian float32; the sample rate travels in the manifest.
inline Waveform read_raw_f32(const std::string& path, int sample_rate) {
  std::ifstream in(path, std::ios::binary);
  SC_CHECK(in.good(), ErrorCode::kIo, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  SC_CHECK(bytes.size() % 4 == 0, ErrorCode::kFormat, path + ": size not a multiple of 4");
  Waveform wave;
  wave.sample_rate = sample_rate;
  wave.samples.resize(bytes.size() / 4);
  std::memcpy(wave.samples.data(), bytes.data(), bytes.size());
  return wave;
}

inline void write_raw_f32(const std::string& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  SC_CHECK(out.good(), ErrorCode::kIo, "cannot open " + path);
  out.write(reinterpret_cast<const char*>(wave.samples.data()),
            static_cast<std::streamsize>(wave.samples.size() * 4));
}

}  // namespace speechcache::dsp

#endif  // SPEECHCACHE_DSP_WAVEFORM_HPP_
