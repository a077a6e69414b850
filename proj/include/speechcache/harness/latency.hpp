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

#ifndef SPEECHCACHE_HARNESS_LATENCY_HPP_
#define SPEECHCACHE_HARNESS_LATENCY_HPP_

#include <algorithm>
#include <random>

#include "speechcache/cache/manager.hpp"
#include "speechcache/error.hpp"

namespace speechcache::harness {

// Measured constants: an L1 hit costs 96 ms end to end (the streaming
// residual of the last 0.25 s segment is already inside it), L2 adds 89 ms.
// Offloads scale with the audio: RTF ~ N(0.30, 0.033) clipped to
// [0.29 * 0.8, 0.34 * 1.2].
struct LatencyModel {
  double l1_hit_ms = 96.0;
  double l2_hit_ms = 185.0;
  double rtf_mean = 0.30;
  double rtf_sd = 0.033;
  double rtf_min = 0.29 * 0.8;
  double rtf_max = 0.34 * 1.2;
  double active_power_mw = 200.6;
};

inline double sample_rtf(const LatencyModel& m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(m.rtf_mean, m.rtf_sd);
  return std::clamp(g(rng), m.rtf_min, m.rtf_max);
}

inline double account_latency(cache::Level level, double duration_s, const LatencyModel& m,
                              std::uint64_t seed) {
  SC_CHECK(duration_s > 0.0, ErrorCode::kInvalidAudio, "duration must be positive");
  switch (level) {
    case cache::Level::kL1Hit: return m.l1_hit_ms;
    case cache::Level::kL2Hit: return m.l2_hit_ms;
    case cache::Level::kOffload: {
      std::mt19937_64 rng(seed);
      return sample_rtf(m, rng) * duration_s * 1000.0;
    }
  }
  return 0.0;
}

// E = P t. The offload path reuses the active power over its whole window,
// a first-order stand-in for the radio.
inline double account_energy(double latency_ms, const LatencyModel& m) {
  SC_CHECK(latency_ms >= 0.0, ErrorCode::kConfig, "negative latency");
  return m.active_power_mw * latency_ms / 1000.0;  // mW * s = mJ
}

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_LATENCY_HPP_
