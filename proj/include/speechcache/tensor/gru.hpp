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

#ifndef SPEECHCACHE_TENSOR_GRU_HPP_
#define SPEECHCACHE_TENSOR_GRU_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/named_tensors.hpp"
#include "speechcache/tensor/tensor.hpp"
#include "speechcache/types.hpp"

namespace speechcache::ad {

struct GruStackConfig {
  std::size_t input_dim = 60;
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t outputs = 42;
  bool classifier_bias = true;
};

// Bi-directional GRU layers -> linear classifier -> log-softmax.
// Each layer's output is [forward | backward] along the feature axis.
template <typename S>
class GruStack {
 public:
  struct Direction {
    Tensor<S> w_ih;  // 3H x in
    Tensor<S> w_hh;  // 3H x H
    Tensor<S> b_ih;  // 3H
    Tensor<S> b_hh;  // 3H
  };
  using Layer = std::array<Direction, 2>;

  GruStack() = default;

  // Uniform(+-1/sqrt(fan_in)) initialization.
  static GruStack create(const GruStackConfig& config, std::uint64_t seed) {
    SC_CHECK(config.input_dim > 0 && config.hidden > 0 && config.layers > 0 &&
                 config.outputs > 1,
             ErrorCode::kShapeError, "degenerate GRU stack configuration");
    GruStack g;
    g.config_ = config;
    std::mt19937_64 rng(seed);
    auto init = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      auto t = Tensor<S>::zeros(std::move(shape), true);
      for (auto& v : t.mutable_data()) v = static_cast<S>(u(rng));
      return t;
    };
    const std::size_t h = config.hidden;
    std::size_t in = config.input_dim;
    for (std::size_t l = 0; l < config.layers; ++l) {
      Layer layer;
      for (auto& d : layer) {
        d.w_ih = init({3 * h, in}, in);
        d.w_hh = init({3 * h, h}, h);
        d.b_ih = init({3 * h}, h);
        d.b_hh = init({3 * h}, h);
      }
      g.layers_.push_back(std::move(layer));
      in = 2 * h;
    }
    g.w_out_ = init({config.outputs, 2 * h}, 2 * h);
    if (config.classifier_bias) g.b_out_ = init({config.outputs}, 2 * h);
    return g;
  }

  const GruStackConfig& config() const { return config_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  // T x outputs log-probabilities.
  Tensor<S> forward(const Tensor<S>& features) const {
    SC_CHECK(features.rows() > 0 && features.shape().size() == 2, ErrorCode::kShapeError,
             "GRU stack needs a non-empty T x n input");
    SC_CHECK(features.cols() == config_.input_dim, ErrorCode::kShapeError,
             "feature dim " + std::to_string(features.cols()) + " != model input dim " +
                 std::to_string(config_.input_dim));
    Tensor<S> x = features;
    for (const auto& layer : layers_) x = bidirectional(layer, x);
    return log_softmax_rows(linear(x, w_out_, b_out_));
  }

  template <typename Derived>
  Tensor<S> forward(const Eigen::MatrixBase<Derived>& features) const {
    SC_CHECK(features.rows() > 0, ErrorCode::kShapeError, "GRU stack input has zero frames");
    return forward(Tensor<S>::from_matrix(features));
  }

  // Output of one layer; exposed for the direction-symmetry property.
  static Tensor<S> bidirectional(const Layer& layer, const Tensor<S>& x) {
    const auto& f = layer[0];
    const auto& b = layer[1];
    const auto hf = gru_sequence(linear(x, f.w_ih, f.b_ih), f.w_hh, f.b_hh, false);
    const auto hb = gru_sequence(linear(x, b.w_ih, b.b_ih), b.w_hh, b.b_hh, true);
    return concat_cols(hf, hb);
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    for (const auto& layer : layers_) {
      for (const auto& d : layer) {
        out.insert(out.end(), {d.w_ih, d.w_hh, d.b_ih, d.b_hh});
      }
    }
    out.push_back(w_out_);
    if (b_out_.defined()) out.push_back(b_out_);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
  }

  void set_requires_grad(bool v) {
    for (auto& p : parameters()) p.set_requires_grad(v);
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

  // Deep copy with an independent parameter set.
  GruStack clone() const { return cast<S>(); }

  template <typename T>
  GruStack<T> cast() const {
    GruStack<T> out;
    out.config_ = config_;
    auto conv = [](const Tensor<S>& t) {
      std::vector<T> data(t.data().begin(), t.data().end());
      return Tensor<T>::from(t.shape(), std::move(data), t.requires_grad());
    };
    for (const auto& layer : layers_) {
      typename GruStack<T>::Layer l;
      for (std::size_t d = 0; d < 2; ++d) {
        l[d] = {conv(layer[d].w_ih), conv(layer[d].w_hh), conv(layer[d].b_ih),
                conv(layer[d].b_hh)};
      }
      out.layers_.push_back(std::move(l));
    }
    out.w_out_ = conv(w_out_);
    if (b_out_.defined()) out.b_out_ = conv(b_out_);
    return out;
  }

  NamedTensorFile to_tensors() const {
    NamedTensorFile f;
    f.put("meta.config", {5},
          {static_cast<float>(config_.input_dim), static_cast<float>(config_.hidden),
           static_cast<float>(config_.layers), static_cast<float>(config_.outputs),
           config_.classifier_bias ? 1.0f : 0.0f});
    auto put = [&f](const std::string& name, const Tensor<S>& t) {
      std::vector<std::uint32_t> shape(t.shape().begin(), t.shape().end());
      f.put(name, std::move(shape), std::vector<float>(t.data().begin(), t.data().end()));
    };
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      for (std::size_t d = 0; d < 2; ++d) {
        const std::string p = "gru.l" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
        put(p + "w_ih", layers_[l][d].w_ih);
        put(p + "w_hh", layers_[l][d].w_hh);
        put(p + "b_ih", layers_[l][d].b_ih);
        put(p + "b_hh", layers_[l][d].b_hh);
      }
    }
    put("classifier.weight", w_out_);
    if (b_out_.defined()) put("classifier.bias", b_out_);
    return f;
  }

  static GruStack from_tensors(const NamedTensorFile& f) {
    const auto& meta = f.get("meta.config").data;
    SC_CHECK(meta.size() == 5, ErrorCode::kFormat, "bad GRU meta block");
    GruStackConfig config;
    config.input_dim = static_cast<std::size_t>(meta[0]);
    config.hidden = static_cast<std::size_t>(meta[1]);
    config.layers = static_cast<std::size_t>(meta[2]);
    config.outputs = static_cast<std::size_t>(meta[3]);
    config.classifier_bias = meta[4] != 0.0f;
    GruStack g = create(config, 0);
    auto load = [&f](const std::string& name, Tensor<S>& t) {
      const auto& src = f.get(name);
      SC_CHECK(src.data.size() == t.numel(), ErrorCode::kShapeError,
               "tensor '" + name + "' has the wrong size");
      std::copy(src.data.begin(), src.data.end(), t.mutable_data().begin());
    };
    for (std::size_t l = 0; l < g.layers_.size(); ++l) {
      for (std::size_t d = 0; d < 2; ++d) {
        const std::string p = "gru.l" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
        load(p + "w_ih", g.layers_[l][d].w_ih);
        load(p + "w_hh", g.layers_[l][d].w_hh);
        load(p + "b_ih", g.layers_[l][d].b_ih);
        load(p + "b_hh", g.layers_[l][d].b_hh);
      }
    }
    load("classifier.weight", g.w_out_);
    if (g.b_out_.defined()) load("classifier.bias", g.b_out_);
    return g;
  }

  std::uint64_t content_hash() const { return to_tensors().content_hash(); }

 private:
  template <typename>
  friend class GruStack;

  GruStackConfig config_;
  std::vector<Layer> layers_;
  Tensor<S> w_out_;
  Tensor<S> b_out_;
};

}  // namespace speechcache::ad

#endif  // SPEECHCACHE_TENSOR_GRU_HPP_
