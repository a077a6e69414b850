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

#ifndef SPEECHCACHE_DSP_SINC_HPP_
#define SPEECHCACHE_DSP_SINC_HPP_

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "speechcache/dsp/waveform.hpp"
#include "speechcache/error.hpp"

namespace speechcache::dsp {

namespace detail {

inline void check_band(double f_low, double f_high, double sample_rate) {
  SC_CHECK(f_low > 0.0 && f_low < f_high && f_high < sample_rate / 2.0,
           ErrorCode::kInvalidFilter,
           "cutoffs must satisfy 0 < f_low < f_high < Nyquist (got " +
               std::to_string(f_low) + ", " + std::to_string(f_high) + ")");
}

}  // namespace detail

// Windowed band-pass kernel built as the difference of two sinc low-pass
// filters. Even-symmetric about the center tap.
inline std::vector<float> sinc_kernel(double f_low, double f_high,
                                      std::size_t length,
                                      double sample_rate = 16000.0) {
  detail::check_band(f_low, f_high, sample_rate);
  const auto window = hamming_window(length);
  const double center = (static_cast<double>(length) - 1.0) / 2.0;
  const double w1 = 2.0 * std::numbers::pi * f_low / sample_rate;
  const double w2 = 2.0 * std::numbers::pi * f_high / sample_rate;
  std::vector<float> k(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double m = static_cast<double>(i) - center;
    double v;
    if (m == 0.0) {
      v = (w2 - w1) / std::numbers::pi;
    } else {
      v = (std::sin(w2 * m) - std::sin(w1 * m)) / (std::numbers::pi * m);
    }
    k[i] = static_cast<float>(v * window[i]);
  }
  return k;
}

// Hilbert companion of sinc_kernel (odd-symmetric). Together the pair gives
// a phase-insensitive band envelope.
inline std::vector<float> sinc_quadrature_kernel(double f_low, double f_high,
                                                 std::size_t length,
                                                 double sample_rate = 16000.0) {
  detail::check_band(f_low, f_high, sample_rate);
  const auto window = hamming_window(length);
  const double center = (static_cast<double>(length) - 1.0) / 2.0;
  const double w1 = 2.0 * std::numbers::pi * f_low / sample_rate;
  const double w2 = 2.0 * std::numbers::pi * f_high / sample_rate;
  std::vector<float> k(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double m = static_cast<double>(i) - center;
    const double v =
        m == 0.0 ? 0.0 : (std::cos(w1 * m) - std::cos(w2 * m)) / (std::numbers::pi * m);
    k[i] = static_cast<float>(v * window[i]);
  }
  return k;
}

}  // namespace speechcache::dsp

#endif  // SPEECHCACHE_DSP_SINC_HPP_
