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

#ifndef SPEECHCACHE_CACHE_THRESHOLD_MLP_HPP_
#define SPEECHCACHE_CACHE_THRESHOLD_MLP_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/tensor/adam.hpp"
#include "speechcache/tensor/tensor.hpp"

namespace speechcache::cache {

// 1 -> 64 (ReLU) -> 1 regressor from key length to a loss threshold;
// 64 + 64 + 64 + 1 = 193 parameters. Output is clipped at zero.
class ThresholdMlp {
 public:
  static constexpr std::size_t kHidden = 64;
  static constexpr std::size_t kParameterCount = kHidden + kHidden + kHidden + 1;

  ThresholdMlp() : w1_(kHidden, 0.0), b1_(kHidden, 0.0), w2_(kHidden, 0.0), b2_(0.0) {}

  static ThresholdMlp create(std::uint64_t seed) {
    ThresholdMlp m;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u1(-1.0, 1.0);
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(kHidden));
    std::uniform_real_distribution<double> u2(-bound2, bound2);
    for (auto& v : m.w1_) v = u1(rng);
    for (auto& v : m.b1_) v = u1(rng);
    for (auto& v : m.w2_) v = u2(rng);
    m.b2_ = u2(rng);
    return m;
  }

  // Constant predictor: all weights zero, output bias `b`.
  static ThresholdMlp constant(double b) {
    ThresholdMlp m;
    m.b2_ = b;
    return m;
  }

  std::size_t parameter_count() const { return w1_.size() + b1_.size() + w2_.size() + 1; }

  double operator()(std::size_t key_length) const {
    const double x = static_cast<double>(key_length) * input_scale_;
    double y = b2_;
    for (std::size_t i = 0; i < kHidden; ++i) y += w2_[i] * std::max(0.0, w1_[i] * x + b1_[i]);
    return std::max(0.0, y * output_scale_);
  }

  struct FitReport {
    double mse = 0.0;
    double baseline_mse = 0.0;  // best constant predictor
    std::size_t steps = 0;
  };

  // Full-batch Adam on squared error. Inputs and targets are rescaled
  // internally so a fixed learning rate works across loss magnitudes.
  FitReport fit(std::span<const std::size_t> lengths, std::span<const double> targets,
                std::size_t steps = 3000, double lr = 1e-2) {
    SC_CHECK(!lengths.empty() && lengths.size() == targets.size(), ErrorCode::kConfig,
             "threshold fit needs matching, non-empty samples");
    const std::size_t n = lengths.size();
    double max_len = 1.0, mean_t = 0.0, max_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      max_len = std::max(max_len, static_cast<double>(lengths[i]));
      mean_t += targets[i];
      max_t = std::max(max_t, std::fabs(targets[i]));
    }
    mean_t /= static_cast<double>(n);
    input_scale_ = 1.0 / max_len;
    output_scale_ = max_t > 0.0 ? max_t : 1.0;

    using T = ad::Tensor<double>;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = static_cast<double>(lengths[i]) * input_scale_;
      ys[i] = targets[i] / output_scale_;
    }
    const auto x = T::from({n, 1}, xs);
    const auto y = T::from({n, 1}, ys);
    auto w1 = T::from({kHidden, 1}, w1_, true);
    auto b1 = T::from({kHidden}, b1_, true);
    auto w2 = T::from({1, kHidden}, w2_, true);
    auto b2 = T::from({1}, {b2_}, true);
    ad::AdamConfig cfg;
    cfg.lr = lr;
    ad::Adam<double> opt({w1, b1, w2, b2}, cfg);
    FitReport rep;
    for (std::size_t s = 0; s < steps; ++s) {
      opt.zero_grad();
      const auto pred = ad::linear(ad::relu(ad::linear(x, w1, b1)), w2, b2);
      const auto err = ad::sub(pred, y);
      ad::backward(ad::mean(ad::mul(err, err)));
      opt.step();
      ++rep.steps;
    }
    w1_.assign(w1.data().begin(), w1.data().end());
    b1_.assign(b1.data().begin(), b1.data().end());
    w2_.assign(w2.data().begin(), w2.data().end());
    b2_ = b2.data()[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double e = (*this)(lengths[i]) - targets[i];
      rep.mse += e * e;
      rep.baseline_mse += (targets[i] - mean_t) * (targets[i] - mean_t);
    }
    rep.mse /= static_cast<double>(n);
    rep.baseline_mse /= static_cast<double>(n);
    return rep;
  }

  // Flat parameter vector: w1, b1, w2, b2, then the two scales.
  std::vector<double> to_vector() const {
    std::vector<double> v(w1_);
    v.insert(v.end(), b1_.begin(), b1_.end());
    v.insert(v.end(), w2_.begin(), w2_.end());
    v.push_back(b2_);
    v.push_back(input_scale_);
    v.push_back(output_scale_);
    return v;
  }

  static ThresholdMlp from_vector(std::span<const double> v) {
    SC_CHECK(v.size() == kParameterCount + 2, ErrorCode::kFormat, "bad threshold MLP vector");
    ThresholdMlp m;
    std::copy_n(v.begin(), kHidden, m.w1_.begin());
    std::copy_n(v.begin() + kHidden, kHidden, m.b1_.begin());
    std::copy_n(v.begin() + 2 * kHidden, kHidden, m.w2_.begin());
    m.b2_ = v[3 * kHidden];
    m.input_scale_ = v[3 * kHidden + 1];
    m.output_scale_ = v[3 * kHidden + 2];
    return m;
  }

 private:
  std::vector<double> w1_, b1_, w2_;
  double b2_;
  double input_scale_ = 1.0;
  double output_scale_ = 1.0;
};

// Per-entry regression target from held-out losses against that entry: the
// midpoint of the gap when positives and negatives separate, otherwise just
// under the smallest negative (rejects every negative). nullopt without data.
inline std::optional<double> threshold_target(std::span<const double> positives,
                                              std::span<const double> negatives) {
  double max_pos = -std::numeric_limits<double>::infinity();
  double min_neg = std::numeric_limits<double>::infinity();
  for (double p : positives) {
    if (std::isfinite(p)) max_pos = std::max(max_pos, p);
  }
  for (double q : negatives) min_neg = std::min(min_neg, q);
  const bool have_pos = std::isfinite(max_pos);
  const bool have_neg = std::isfinite(min_neg);
  if (!have_pos && !have_neg) return std::nullopt;
  if (!have_neg) return max_pos * 1.5;
  if (!have_pos || max_pos >= min_neg) return min_neg * (1.0 - 1e-6);
  return 0.5 * (max_pos + min_neg);
}

}  // namespace speechcache::cache

#endif  // SPEECHCACHE_CACHE_THRESHOLD_MLP_HPP_
