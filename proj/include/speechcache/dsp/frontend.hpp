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

#ifndef SPEECHCACHE_DSP_FRONTEND_HPP_
#define SPEECHCACHE_DSP_FRONTEND_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "speechcache/dsp/sinc.hpp"
#include "speechcache/dsp/waveform.hpp"
#include "speechcache/error.hpp"
#include "speechcache/named_tensors.hpp"
#include "speechcache/types.hpp"

namespace speechcache::dsp {

struct FrontendConfig {
  int sample_rate = 16000;
  FrameSpec frame{};
  std::size_t n_filters = 60;
  std::size_t channels = 60;
  std::size_t conv_kernel = 5;
  float leaky_slope = 0.2f;
  float bn_eps = 1e-5f;
  // Envelope compression: log(1 + gain * |z|).
  float compression_gain = 100.0f;
  double min_low_hz = 30.0;
  double max_high_hz = 7600.0;
};

struct FeatureSequence {
  RowMatrix<float> frames;  // T x n
  std::vector<double> frame_times;

  std::size_t size() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
};

// Growable row store shared by the batch and streaming drivers.
struct RowBuffer {
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  const float* row(std::size_t i) const { return data.data() + i * dim; }
  float* append() {
    data.resize(data.size() + dim);
    return data.data() + data.size() - dim;
  }
};

// Pooled length: halves with floor, except a single row passes through.
inline std::size_t pooled_length(std::size_t n) {
  return n == 1 ? 1 : n / 2;
}

// Frozen time-domain front-end: a band-pass sinc layer evaluated once per
// Hamming frame (kernel = window_len, stride = hop), followed by two
// conv(kernel 5, stride 1) -> avg-pool(2, 2) -> batch-norm -> leaky-ReLU
// blocks. Convolutions use edge replication at both sequence ends.
class FrontendModel {
 public:
  struct ConvBlock {
    RowMatrix<float> weight;  // out x (kernel * in); column = k * in + c
    std::vector<float> bn_mean, bn_var, bn_gamma, bn_beta;
  };

  FrontendModel() = default;

  static FrontendModel create(const FrontendConfig& config, std::uint64_t seed) {
    FrontendModel m;
    m.config_ = config;
    validate(config.frame);
    SC_CHECK(config.n_filters > 0 && config.channels > 0 && config.conv_kernel % 2 == 1,
             ErrorCode::kShapeError, "front-end needs filters, channels and an odd kernel");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);

    // Mel-spaced bands, slightly perturbed per seed.
    auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
    auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
    const double mel_lo = hz_to_mel(config.min_low_hz);
    const double mel_hi = hz_to_mel(config.max_high_hz);
    const double nyquist = config.sample_rate / 2.0;
    for (std::size_t f = 0; f < config.n_filters; ++f) {
      const double a = mel_lo + (mel_hi - mel_lo) * f / (config.n_filters + 1.0);
      const double b = mel_lo + (mel_hi - mel_lo) * (f + 2.0) / (config.n_filters + 1.0);
      double lo = mel_to_hz(a) * (1.0 + jitter(rng));
      double hi = mel_to_hz(b) * (1.0 + jitter(rng));
      lo = std::clamp(lo, 1.0, nyquist - 2.0);
      hi = std::clamp(hi, lo + 1.0, nyquist - 1.0);
      m.low_hz_.push_back(static_cast<float>(lo));
      m.high_hz_.push_back(static_cast<float>(hi));
    }
    m.build_sinc_bank();

    std::size_t in = config.n_filters;
    for (auto& block : m.conv_) {
      const std::size_t fan_in = in * config.conv_kernel;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      block.weight.resize(config.channels, fan_in);
      for (Eigen::Index i = 0; i < block.weight.size(); ++i) {
        block.weight.data()[i] = static_cast<float>(u(rng));
      }
      block.bn_mean.assign(config.channels, 0.0f);
      block.bn_var.assign(config.channels, 1.0f);
      block.bn_gamma.assign(config.channels, 1.0f);
      block.bn_beta.assign(config.channels, 0.0f);
      in = config.channels;
    }
    m.calibrate_batch_norm(calibration_audio(config, mix_seed(seed, 17)));
    return m;
  }

  const FrontendConfig& config() const { return config_; }
  std::size_t feature_dim() const { return config_.channels; }
  const std::vector<float>& low_hz() const { return low_hz_; }
  const std::vector<float>& high_hz() const { return high_hz_; }
  const ConvBlock& block(std::size_t i) const { return conv_.at(i); }

  // Number of output rows for a waveform with `n_frames` sinc frames.
  static std::size_t output_length(std::size_t n_frames) {
    if (n_frames == 0) return 0;
    return pooled_length(pooled_length(n_frames));
  }

  // --- per-row primitives; both drivers go through these ---

  void sinc_row(const float* windowed_frame, float* out) const {
    const std::size_t f = config_.n_filters;
    // Copy into an aligned buffer: Eigen's reduction order depends on
    // operand alignment, and both drivers must round identically.
    const Vector<float> frame = Eigen::Map<const Vector<float>>(
        windowed_frame, static_cast<Eigen::Index>(config_.frame.window_len));
    const Vector<float> z = sinc_bank_ * frame;
    for (std::size_t i = 0; i < f; ++i) {
      const float re = z[static_cast<Eigen::Index>(i)];
      const float im = z[static_cast<Eigen::Index>(i + f)];
      out[i] = std::log1p(config_.compression_gain * std::sqrt(re * re + im * im));
    }
  }

  void window_frame(const float* samples, float* out) const {
    for (std::size_t i = 0; i < config_.frame.window_len; ++i) {
      out[i] = samples[i] * hamming_[i];
    }
  }

  // Convolution output row `t` of `layer`, reading `n_rows` valid input rows
  // (indices clamped to [0, n_rows)).
  void conv_row(std::size_t layer, const RowBuffer& in, std::size_t n_rows,
                std::size_t t, float* out) const {
    const auto& w = conv_[layer].weight;
    const std::size_t k = config_.conv_kernel;
    const std::size_t half = k / 2;
    Vector<float> stacked(static_cast<Eigen::Index>(k * in.dim));
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                 static_cast<std::ptrdiff_t>(half);
      const std::size_t idx = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(src, 0, static_cast<std::ptrdiff_t>(n_rows) - 1));
      std::copy_n(in.row(idx), in.dim, stacked.data() + j * in.dim);
    }
    Eigen::Map<Vector<float>> dst(out, w.rows());
    dst.noalias() = w * stacked;
  }

  void pool_row(const float* a, const float* b, std::size_t dim, float* out) const {
    for (std::size_t i = 0; i < dim; ++i) out[i] = (a[i] + b[i]) * 0.5f;
  }

  void norm_act_row(std::size_t layer, float* row) const {
    const auto& blk = conv_[layer];
    for (std::size_t c = 0; c < config_.channels; ++c) {
      float v = (row[c] - blk.bn_mean[c]) / std::sqrt(blk.bn_var[c] + config_.bn_eps);
      v = v * blk.bn_gamma[c] + blk.bn_beta[c];
      row[c] = v >= 0.0f ? v : v * config_.leaky_slope;
    }
  }

  // Whole-input stage outputs, exposed for the time-shift property (which is
  // checked before pooling).
  RowBuffer sinc_layer(const Waveform& wave) const {
    check_input(wave);
    const auto frames = frame(wave, config_.frame);
    RowBuffer out{config_.n_filters, {}};
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
      sinc_row(frames.row(t).data(), out.append());
    }
    return out;
  }

  RowBuffer conv_stage(std::size_t layer, const RowBuffer& in) const {
    RowBuffer out{config_.channels, {}};
    for (std::size_t t = 0; t < in.rows(); ++t) {
      conv_row(layer, in, in.rows(), t, out.append());
    }
    return out;
  }

  RowBuffer pool_stage(std::size_t layer, const RowBuffer& in) const {
    RowBuffer out{in.dim, {}};
    const std::size_t n = pooled_length(in.rows());
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t b = in.rows() == 1 ? 0 : 2 * j + 1;
      float* row = out.append();
      pool_row(in.row(in.rows() == 1 ? 0 : 2 * j), in.row(b), in.dim, row);
      norm_act_row(layer, row);
    }
    return out;
  }

  void check_input(const Waveform& wave) const {
    check_finite(wave);
    SC_CHECK(wave.sample_rate == config_.sample_rate, ErrorCode::kInvalidAudio,
             "sample rate " + std::to_string(wave.sample_rate) + " != model rate " +
                 std::to_string(config_.sample_rate));
  }

  // Re-estimates the frozen batch-norm statistics from example audio.
  void calibrate_batch_norm(const std::vector<Waveform>& audio) {
    for (std::size_t layer = 0; layer < conv_.size(); ++layer) {
      auto& blk = conv_[layer];
      std::vector<double> sum(config_.channels, 0.0), sq(config_.channels, 0.0);
      std::size_t count = 0;
      for (const auto& wave : audio) {
        RowBuffer x = sinc_layer(wave);
        for (std::size_t l = 0; l < layer; ++l) x = pool_stage(l, conv_stage(l, x));
        const RowBuffer c = conv_stage(layer, x);
        const std::size_t n = pooled_length(c.rows());
        std::vector<float> row(config_.channels);
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t a = c.rows() == 1 ? 0 : 2 * j;
          const std::size_t b = c.rows() == 1 ? 0 : 2 * j + 1;
          pool_row(c.row(a), c.row(b), c.dim, row.data());
          for (std::size_t ch = 0; ch < config_.channels; ++ch) {
            sum[ch] += row[ch];
            sq[ch] += static_cast<double>(row[ch]) * row[ch];
          }
          ++count;
        }
      }
      if (count == 0) continue;
      for (std::size_t ch = 0; ch < config_.channels; ++ch) {
        const double mean = sum[ch] / count;
        blk.bn_mean[ch] = static_cast<float>(mean);
        blk.bn_var[ch] = static_cast<float>(std::max(sq[ch] / count - mean * mean, 1e-6));
      }
    }
  }

  NamedTensorFile to_tensors() const {
    NamedTensorFile f;
    const auto& c = config_;
    f.put("meta.config", {11},
          {static_cast<float>(c.sample_rate), static_cast<float>(c.frame.window_len),
           static_cast<float>(c.frame.hop), static_cast<float>(c.n_filters),
           static_cast<float>(c.channels), static_cast<float>(c.conv_kernel),
           c.leaky_slope, c.bn_eps, c.compression_gain, static_cast<float>(c.min_low_hz),
           static_cast<float>(c.max_high_hz)});
    f.put("sinc.low_hz", {static_cast<std::uint32_t>(low_hz_.size())}, low_hz_);
    f.put("sinc.high_hz", {static_cast<std::uint32_t>(high_hz_.size())}, high_hz_);
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      const auto& b = conv_[i];
      const std::string p = "conv" + std::to_string(i + 1) + ".";
      f.put(p + "weight",
            {static_cast<std::uint32_t>(b.weight.rows()), static_cast<std::uint32_t>(b.weight.cols())},
            std::vector<float>(b.weight.data(), b.weight.data() + b.weight.size()));
      const auto n = static_cast<std::uint32_t>(b.bn_mean.size());
      f.put(p + "bn_mean", {n}, b.bn_mean);
      f.put(p + "bn_var", {n}, b.bn_var);
      f.put(p + "bn_gamma", {n}, b.bn_gamma);
      f.put(p + "bn_beta", {n}, b.bn_beta);
    }
    return f;
  }

  static FrontendModel from_tensors(const NamedTensorFile& f) {
    FrontendModel m;
    const auto& meta = f.get("meta.config").data;
    SC_CHECK(meta.size() == 11, ErrorCode::kFormat, "bad front-end meta block");
    auto& c = m.config_;
    c.sample_rate = static_cast<int>(meta[0]);
    c.frame.window_len = static_cast<std::size_t>(meta[1]);
    c.frame.hop = static_cast<std::size_t>(meta[2]);
    c.n_filters = static_cast<std::size_t>(meta[3]);
    c.channels = static_cast<std::size_t>(meta[4]);
    c.conv_kernel = static_cast<std::size_t>(meta[5]);
    c.leaky_slope = meta[6];
    c.bn_eps = meta[7];
    c.compression_gain = meta[8];
    c.min_low_hz = meta[9];
    c.max_high_hz = meta[10];
    m.low_hz_ = f.get("sinc.low_hz").data;
    m.high_hz_ = f.get("sinc.high_hz").data;
    SC_CHECK(m.low_hz_.size() == c.n_filters && m.high_hz_.size() == c.n_filters,
             ErrorCode::kShapeError, "sinc cutoff count mismatch");
    m.build_sinc_bank();
    std::size_t in = c.n_filters;
    for (std::size_t i = 0; i < m.conv_.size(); ++i) {
      auto& b = m.conv_[i];
      const std::string p = "conv" + std::to_string(i + 1) + ".";
      const auto& w = f.get(p + "weight");
      SC_CHECK(w.shape.size() == 2 && w.shape[0] == c.channels && w.shape[1] == in * c.conv_kernel,
               ErrorCode::kShapeError, p + "weight has the wrong shape");
      b.weight = Eigen::Map<const RowMatrix<float>>(w.data.data(), w.shape[0], w.shape[1]);
      b.bn_mean = f.get(p + "bn_mean").data;
      b.bn_var = f.get(p + "bn_var").data;
      b.bn_gamma = f.get(p + "bn_gamma").data;
      b.bn_beta = f.get(p + "bn_beta").data;
      in = c.channels;
    }
    return m;
  }

  std::uint64_t content_hash() const { return to_tensors().content_hash(); }

 private:
  void build_sinc_bank() {
    const std::size_t f = config_.n_filters;
    const std::size_t len = config_.frame.window_len;
    sinc_bank_.resize(2 * f, len);
    for (std::size_t i = 0; i < f; ++i) {
      const auto re = sinc_kernel(low_hz_[i], high_hz_[i], len, config_.sample_rate);
      const auto im = sinc_quadrature_kernel(low_hz_[i], high_hz_[i], len, config_.sample_rate);
      for (std::size_t j = 0; j < len; ++j) {
        sinc_bank_(i, j) = re[j];
        sinc_bank_(i + f, j) = im[j];
      }
    }
    hamming_ = hamming_window(len);
  }

  static std::vector<Waveform> calibration_audio(const FrontendConfig& config,
                                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> freq(80.0, 6000.0);
    std::uniform_real_distribution<double> amp(0.05, 0.4);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<Waveform> out;
    for (int clip = 0; clip < 6; ++clip) {
      Waveform w;
      w.sample_rate = config.sample_rate;
      w.samples.resize(static_cast<std::size_t>(config.sample_rate) / 2);
      const double f1 = freq(rng), f2 = freq(rng), a1 = amp(rng), a2 = amp(rng);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const double t = static_cast<double>(i) / config.sample_rate;
        w.samples[i] = static_cast<float>(a1 * std::sin(2 * std::numbers::pi * f1 * t) +
                                          a2 * std::sin(2 * std::numbers::pi * f2 * t) +
                                          noise(rng));
      }
      out.push_back(std::move(w));
    }
    return out;
  }

  FrontendConfig config_;
  std::vector<float> low_hz_, high_hz_;
  RowMatrix<float> sinc_bank_;  // rows [0, F): in-phase, [F, 2F): quadrature
  std::vector<float> hamming_;
  std::array<ConvBlock, 2> conv_;
};

namespace detail {

inline FeatureSequence to_sequence(const RowBuffer& rows, const FrontendModel& model) {
  FeatureSequence seq;
  seq.frames.resize(static_cast<Eigen::Index>(rows.rows()), static_cast<Eigen::Index>(rows.dim));
  std::copy(rows.data.begin(), rows.data.end(), seq.frames.data());
  const double hop_s = static_cast<double>(model.config().frame.hop) / model.config().sample_rate;
  for (std::size_t k = 0; k < rows.rows(); ++k) seq.frame_times.push_back(4.0 * k * hop_s);
  return seq;
}

}  // namespace detail

inline FeatureSequence extract_features(const Waveform& wave, const FrontendModel& model) {
  RowBuffer x = model.sinc_layer(wave);
  for (std::size_t layer = 0; layer < 2; ++layer) {
    x = model.pool_stage(layer, model.conv_stage(layer, x));
  }
  return detail::to_sequence(x, model);
}

inline FeatureSequence extract_features(const Waveform& wave, const FrontendModel& model,
                                        const FrameSpec& spec) {
  SC_CHECK(spec.window_len == model.config().frame.window_len &&
               spec.hop == model.config().frame.hop,
           ErrorCode::kShapeError, "frame spec does not match the front-end model");
  return extract_features(wave, model);
}

// Incremental extractor. Output rows are finalized as soon as their receptive
// field is complete; the rows touching the right edge wait for finish().
class StreamingExtractor {
 public:
  explicit StreamingExtractor(const FrontendModel& model)
      : model_(model),
        frame_buf_(model.config().frame.window_len),
        sinc_{model.config().n_filters, {}},
        conv1_{model.config().channels, {}},
        act1_{model.config().channels, {}},
        conv2_{model.config().channels, {}},
        out_{model.config().channels, {}} {}

  void push(std::span<const float> samples) {
    for (float s : samples) {
      SC_CHECK(std::isfinite(s), ErrorCode::kInvalidAudio, "non-finite sample in stream");
    }
    pending_.insert(pending_.end(), samples.begin(), samples.end());
    const auto& spec = model_.config().frame;
    while (pending_.size() - consumed_ >= spec.window_len) {
      model_.window_frame(pending_.data() + consumed_, frame_buf_.data());
      model_.sinc_row(frame_buf_.data(), sinc_.append());
      consumed_ += spec.hop;
    }
    // Drop samples no later frame can reach.
    if (consumed_ > 1 << 16) {
      pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(consumed_));
      consumed_ = 0;
    }
    advance(false);
  }

  // Rows finalized so far.
  std::size_t ready_rows() const { return out_.rows(); }

  FeatureSequence finish() {
    SC_CHECK(sinc_.rows() > 0, ErrorCode::kInputTooShort,
             "stream ended before one full window");
    advance(true);
    return detail::to_sequence(out_, model_);
  }

 private:
  void advance(bool final) {
    const std::size_t half = model_.config().conv_kernel / 2;
    step(0, sinc_, conv1_, half, final);
    pool(0, conv1_, act1_, pooled1_, final);
    step(1, act1_, conv2_, half, final);
    pool(1, conv2_, out_, pooled2_, final);
  }

  void step(std::size_t layer, const RowBuffer& in, RowBuffer& out, std::size_t half,
            bool final) {
    const std::size_t n = in.rows();
    while (out.rows() < n && (final || out.rows() + half < n)) {
      const std::size_t t = out.rows();
      model_.conv_row(layer, in, n, t, out.append());
    }
  }

  void pool(std::size_t layer, const RowBuffer& in, RowBuffer& out, std::size_t& done,
            bool final) {
    while (2 * done + 1 < in.rows()) {
      float* row = out.append();
      model_.pool_row(in.row(2 * done), in.row(2 * done + 1), in.dim, row);
      model_.norm_act_row(layer, row);
      ++done;
    }
    if (final && done == 0 && in.rows() == 1) {
      float* row = out.append();
      model_.pool_row(in.row(0), in.row(0), in.dim, row);
      model_.norm_act_row(layer, row);
      ++done;
    }
  }

  const FrontendModel& model_;
  std::vector<float> pending_;
  std::size_t consumed_ = 0;
  std::vector<float> frame_buf_;
  RowBuffer sinc_, conv1_, act1_, conv2_, out_;
  std::size_t pooled1_ = 0, pooled2_ = 0;
};

// Feeds the waveform in `step_frames`-frame segments.
inline FeatureSequence extract_features_streaming(const Waveform& wave,
                                                  const FrontendModel& model,
                                                  std::size_t step_frames = 10) {
  model.check_input(wave);
  SC_CHECK(frame_count(wave.samples.size(), model.config().frame) > 0,
           ErrorCode::kInputTooShort, "waveform shorter than one window");
  StreamingExtractor stream(model);
  const std::size_t chunk = step_frames * model.config().frame.hop;
  for (std::size_t pos = 0; pos < wave.samples.size(); pos += chunk) {
    const std::size_t n = std::min(chunk, wave.samples.size() - pos);
    stream.push(std::span<const float>(wave.samples.data() + pos, n));
  }
  return stream.finish();
}

}  // namespace speechcache::dsp

#endif  // SPEECHCACHE_DSP_FRONTEND_HPP_
