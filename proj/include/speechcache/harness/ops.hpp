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

#ifndef SPEECHCACHE_HARNESS_OPS_HPP_
#define SPEECHCACHE_HARNESS_OPS_HPP_

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "speechcache/ctc/ctc.hpp"
#include "speechcache/dsp/frontend.hpp"
#include "speechcache/tensor/gru.hpp"

namespace speechcache::harness {

// Analytic multiply-add counts from layer shapes. A "step" is 10 output
// frames, the slice of audio whose processing is not hidden by streaming.

inline constexpr std::size_t kStepFrames = 10;

// Per output frame: two pooling stages mean 4 sinc frames and 2 conv2 rows
// per output row. Each sinc filter is a quadrature pair.
inline double frontend_ops_per_frame(const dsp::FrontendConfig& c) {
  const double win = static_cast<double>(c.frame.window_len);
  const double sinc = 4.0 * static_cast<double>(c.n_filters) * 2.0 * win;
  const double conv1 = 4.0 * static_cast<double>(c.channels * c.n_filters * c.conv_kernel);
  const double conv2 = 2.0 * static_cast<double>(c.channels * c.channels * c.conv_kernel);
  return sinc + conv1 + conv2;
}

// Both directions, three gates, input and recurrent products, plus the
// classifier.
inline double gru_ops_per_frame(const ad::GruStackConfig& g) {
  double ops = 0.0;
  double in = static_cast<double>(g.input_dim);
  const double h = static_cast<double>(g.hidden);
  for (std::size_t l = 0; l < g.layers; ++l) {
    ops += 2.0 * 3.0 * h * (in + h);
    in = 2.0 * h;
  }
  return ops + in * static_cast<double>(g.outputs);
}

// Sound-unit assignment: distances from a frame to K centroids.
inline double l1_distance_ops_per_frame(std::size_t k, std::size_t dim) {
  return static_cast<double>(k * dim);
}

// Alignment DP over one entry: T frames x lattice states, three
// predecessor terms per state.
inline double match_ops(std::size_t frames, std::size_t key_length, ctc::CollapseMode mode) {
  const double states = mode == ctc::CollapseMode::kStandardCtc
                            ? 2.0 * static_cast<double>(key_length) + 1.0
                            : static_cast<double>(key_length);
  return 3.0 * static_cast<double>(frames) * states;
}

struct OpsBudget {
  double l1_step = 0.0;  // front-end + sound-unit assignment
  double l2_step = 0.0;  // GRU stack on top of the shared front-end
  double l1_entry_step = 0.0;
  double l2_entry_step = 0.0;
  double l1_entry_emission_step = 0.0;  // centroid distances per entry
};

struct OpsShapes {
  dsp::FrontendConfig frontend;
  ad::GruStackConfig gru;
  std::size_t l1_k = 70;
  std::size_t l1_key_length = 90;  // typical for a 3 s utterance
  std::size_t l2_key_length = 27;
  std::size_t frames = 150;        // 3 s at 50 frames/s
};

inline OpsBudget ops_budget(const OpsShapes& s) {
  const double step = static_cast<double>(kStepFrames);
  OpsBudget b;
  b.l1_step = step * (frontend_ops_per_frame(s.frontend) +
                      l1_distance_ops_per_frame(s.l1_k, s.frontend.channels));
  b.l2_step = step * gru_ops_per_frame(s.gru);
  // Per-entry DP cost amortized over the step.
  b.l1_entry_step = match_ops(kStepFrames, s.l1_key_length, ctc::CollapseMode::kRepeatMerge);
  b.l2_entry_step = match_ops(kStepFrames, s.l2_key_length, ctc::CollapseMode::kStandardCtc);
  b.l1_entry_emission_step = step * l1_distance_ops_per_frame(s.l1_k, s.frontend.channels);
  return b;
}

// Reference figures from the measured system, for side-by-side printing.
struct PublishedOps {
  static constexpr double l1_step = 1.8e6;
  static constexpr double l2_step = 2.9e6;
  static constexpr double l1_entry = 2.80e3;
  static constexpr double l2_entry = 1.68e3;
};

inline nlohmann::ordered_json to_json(const OpsBudget& b) {
  return {{"l1_step_mops", b.l1_step / 1e6},
          {"l2_step_mops", b.l2_step / 1e6},
          {"l1_entry_kops", b.l1_entry_step / 1e3},
          {"l2_entry_kops", b.l2_entry_step / 1e3},
          {"l1_entry_emission_kops", b.l1_entry_emission_step / 1e3},
          {"reference",
           {{"l1_step_mops", PublishedOps::l1_step / 1e6},
            {"l2_step_mops", PublishedOps::l2_step / 1e6},
            {"l1_entry_kops", PublishedOps::l1_entry / 1e3},
            {"l2_entry_kops", PublishedOps::l2_entry / 1e3}}}};
}

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_OPS_HPP_
