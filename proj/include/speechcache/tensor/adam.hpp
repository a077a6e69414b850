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

#ifndef SPEECHCACHE_TENSOR_ADAM_HPP_
#define SPEECHCACHE_TENSOR_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/tensor/tensor.hpp"

namespace speechcache::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update at step `t` (1-based). Elements whose
// gradient is exactly zero keep their value; their moments still decay.
template <typename S>
void adam_step(std::span<S> param, std::span<const S> grad, AdamMoments& state,
               std::uint64_t t, const AdamConfig& cfg) {
  SC_CHECK(param.size() == grad.size(), ErrorCode::kShapeError,
           "adam_step: gradient does not match parameter");
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    if (g == 0.0) continue;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= static_cast<S>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

template <typename S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>> params, AdamConfig config)
      : params_(std::move(params)), config_(config), state_(params_.size()) {}

  // Applies accumulated gradients scaled by `grad_scale` (e.g. 1/batch).
  void step(double grad_scale = 1.0) {
    ++t_;
    std::vector<S> scaled;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) p.zero_grad();
      scaled.assign(p.grad().begin(), p.grad().end());
      for (auto& g : scaled) g = static_cast<S>(g * grad_scale);
      adam_step<S>(p.mutable_data(), scaled, state_[i], t_, config_);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<AdamMoments>& state() const { return state_; }

 private:
  std::vector<Tensor<S>> params_;
  AdamConfig config_;
  std::vector<AdamMoments> state_;
  std::uint64_t t_ = 0;
};

}  // namespace speechcache::ad

#endif  // SPEECHCACHE_TENSOR_ADAM_HPP_
