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

#ifndef SPEECHCACHE_CLOUD_AUGMENT_HPP_
#define SPEECHCACHE_CLOUD_AUGMENT_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "speechcache/dsp/waveform.hpp"
#include "speechcache/types.hpp"

namespace speechcache::cloud {

struct AugmentSpec {
  double shift_pct = 5.0;    // temporal shift ~ U[-shift, shift] % of length
  double freq_pct = 10.0;    // resampling factor 1 + U[-freq, freq] / 100
  double noise_frac = 0.05;  // Gaussian sigma as a fraction of peak amplitude
  std::size_t versions = 5;  // per transformation family
};

enum class AugmentKind { kShift, kFrequency, kNoise };

struct Augmented {
  AugmentKind kind;
  double amount;  // shift %, frequency %, or noise sigma
  dsp::Waveform wave;
};

// Positive shifts delay (leading zeros), negative shifts advance (drop head).
inline dsp::Waveform time_shift(const dsp::Waveform& in, long samples) {
  dsp::Waveform out;
  out.sample_rate = in.sample_rate;
  if (samples >= 0) {
    out.samples.assign(static_cast<std::size_t>(samples), 0.0f);
    out.samples.insert(out.samples.end(), in.samples.begin(), in.samples.end());
  } else {
    const auto drop = std::min(in.samples.size(), static_cast<std::size_t>(-samples));
    out.samples.assign(in.samples.begin() + static_cast<std::ptrdiff_t>(drop), in.samples.end());
  }
  return out;
}

// Linear-interpolation resampling by `factor` (> 1 raises pitch), then
// zero-pad or truncate back to the input length.
inline dsp::Waveform frequency_shift(const dsp::Waveform& in, double factor) {
  dsp::Waveform out;
  out.sample_rate = in.sample_rate;
  const std::size_t n = in.samples.size();
  out.samples.assign(n, 0.0f);
  for (std::size_t k = 0; k < n; ++k) {
    const double pos = static_cast<double>(k) * factor;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= n) {
      if (i < n) out.samples[k] = in.samples[i];
      break;
    }
    const double f = pos - static_cast<double>(i);
    out.samples[k] = static_cast<float>((1.0 - f) * in.samples[i] + f * in.samples[i + 1]);
  }
  return out;
}

inline dsp::Waveform add_noise(const dsp::Waveform& in, double sigma, std::mt19937_64& rng) {
  dsp::Waveform out = in;
  if (sigma <= 0.0) return out;
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& v : out.samples) v = static_cast<float>(v + g(rng));
  return out;
}

inline float peak_amplitude(const dsp::Waveform& w) {
  float p = 0.0f;
  for (float v : w.samples) p = std::max(p, std::fabs(v));
  return p;
}

// versions x {shift, frequency, noise}, in that order; amplitudes clipped.
inline std::vector<Augmented> augment(const dsp::Waveform& wave, const AugmentSpec& spec,
                                      std::uint64_t seed) {
  dsp::check_finite(wave);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Augmented> out;
  const double n = static_cast<double>(wave.samples.size());
  for (std::size_t i = 0; i < spec.versions; ++i) {
    const double pct = spec.shift_pct * u(rng);
    out.push_back({AugmentKind::kShift, pct, time_shift(wave, std::lround(pct / 100.0 * n))});
  }
  for (std::size_t i = 0; i < spec.versions; ++i) {
    const double pct = spec.freq_pct * u(rng);
    out.push_back({AugmentKind::kFrequency, pct, frequency_shift(wave, 1.0 + pct / 100.0)});
  }
  const double sigma = spec.noise_frac * peak_amplitude(wave);
  for (std::size_t i = 0; i < spec.versions; ++i) {
    out.push_back({AugmentKind::kNoise, sigma, add_noise(wave, sigma, rng)});
  }
  for (auto& a : out) {
    for (auto& v : a.wave.samples) v = std::clamp(v, -1.0f, 1.0f);
  }
  return out;
}

}  // namespace speechcache::cloud

#endif  // SPEECHCACHE_CLOUD_AUGMENT_HPP_
