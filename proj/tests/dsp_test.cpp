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

#include <cmath>
#include <complex>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "speechcache/dsp/frontend.hpp"
#include "speechcache/dsp/sinc.hpp"
#include "speechcache/dsp/waveform.hpp"

namespace speechcache::dsp {
namespace {

Waveform random_wave(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = u(rng);
  return w;
}

const FrontendModel& test_model() {
  static const FrontendModel model = FrontendModel::create(FrontendConfig{}, 7);
  return model;
}

// Direct evaluation of the DTFT magnitude at one frequency.
double dtft_magnitude(const std::vector<float>& k, double hz, double fs) {
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < k.size(); ++n) {
    acc += static_cast<double>(k[n]) * std::polar(1.0, -2.0 * M_PI * hz * n / fs);
  }
  return std::abs(acc);
}

TEST(FrameTest, CountsFollowHopFormula) {
  FrameSpec spec;
  EXPECT_EQ(frame(random_wave(16000, 1), spec).rows(), 195);
  EXPECT_EQ(frame(random_wave(401, 1), spec).rows(), 1);
}

TEST(FrameTest, ShortInputIsRejected) {
  try {
    frame(random_wave(400, 1), FrameSpec{});
    FAIL() << "expected InputTooShort";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInputTooShort);
  }
}

TEST(FrameTest, FramesAreHammingTapered) {
  const auto w = random_wave(1000, 3);
  const auto frames = frame(w, FrameSpec{});
  const auto win = hamming_window(401);
  EXPECT_FLOAT_EQ(frames(2, 10), w.samples[160 + 10] * win[10]);
  EXPECT_NEAR(win[0], 0.08f, 1e-6f);
  EXPECT_NEAR(win[200], 1.0f, 1e-6f);
}

TEST(SincKernelTest, IsSymmetric) {
  const auto k = sinc_kernel(300.0, 3400.0, 401);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_EQ(k[i], k[k.size() - 1 - i]);
}

TEST(SincKernelTest, ZeroWidthBandVanishes) {
  const auto k = sinc_kernel(1000.0, 1000.0 + 1e-7, 401);
  for (float v : k) EXPECT_NEAR(v, 0.0f, 1e-9f);
}

TEST(SincKernelTest, PassesMidBandRejectsDc) {
  const auto k = sinc_kernel(1000.0, 2000.0, 401);
  const double mid = dtft_magnitude(k, 1500.0, 16000.0);
  const double dc = dtft_magnitude(k, 0.0, 16000.0);
  EXPECT_NEAR(mid, 1.0, 0.05);
  EXPECT_GT(mid / std::max(dc, 1e-300), 10.0);
}

TEST(SincKernelTest, RejectsBadCutoffs) {
  for (auto [lo, hi] : {std::pair{2000.0, 1000.0}, std::pair{0.0, 1000.0},
                        std::pair{100.0, 8000.0}}) {
    try {
      sinc_kernel(lo, hi, 401);
      FAIL() << lo << " " << hi;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidFilter);
    }
  }
}

TEST(SincKernelTest, QuadratureCompanionIsAntisymmetric) {
  const auto q = sinc_quadrature_kernel(300.0, 900.0, 401);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(q[i], -q[q.size() - 1 - i]);
}

TEST(FrontendTest, CutoffsAreOrderedBelowNyquist) {
  const auto& m = test_model();
  ASSERT_EQ(m.low_hz().size(), 60u);
  for (std::size_t i = 0; i < 60; ++i) {
    EXPECT_GT(m.low_hz()[i], 0.0f);
    EXPECT_LT(m.low_hz()[i], m.high_hz()[i]);
    EXPECT_LT(m.high_hz()[i], 8000.0f);
  }
}

TEST(FrontendTest, ZeroWaveformGivesConstantRows) {
  Waveform zero;
  zero.samples.assign(16000, 0.0f);
  const auto f = extract_features(zero, test_model());
  ASSERT_EQ(f.size(), FrontendModel::output_length(195));
  ASSERT_EQ(f.dim(), 60u);
  for (Eigen::Index t = 1; t < f.frames.rows(); ++t) {
    EXPECT_EQ(f.frames.row(t), f.frames.row(0));
  }
}

TEST(FrontendTest, Deterministic) {
  const auto w = random_wave(12345, 4);
  const auto a = extract_features(w, test_model());
  const auto b = extract_features(w, test_model());
  EXPECT_EQ(a.frames, b.frames);
  const auto other = FrontendModel::create(FrontendConfig{}, 7);
  EXPECT_EQ(extract_features(w, other).frames, a.frames);
}

TEST(FrontendTest, StreamingMatchesBatchBitForBit) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> len(401, 40000);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = trial == 0 ? 401 : len(rng);
    const auto w = random_wave(n, 100 + trial);
    const auto batch = extract_features(w, test_model());
    const auto streamed = extract_features_streaming(w, test_model(), 10);
    ASSERT_EQ(batch.frames.rows(), streamed.frames.rows()) << n;
    EXPECT_EQ(batch.frames, streamed.frames) << n;
    EXPECT_EQ(batch.frame_times, streamed.frame_times);
  }
}

TEST(FrontendTest, StreamingFinalizesRowsBeforeTheEnd) {
  const auto w = random_wave(32000, 5);
  StreamingExtractor s(test_model());
  s.push(std::span<const float>(w.samples.data(), 16000));
  EXPECT_GT(s.ready_rows(), 30u);
  s.push(std::span<const float>(w.samples.data() + 16000, 16000));
  EXPECT_EQ(s.finish().frames, extract_features(w, test_model()).frames);
}

TEST(FrontendTest, ShapeLawOnRandomLengths) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(401, 24000);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = len(rng);
    const std::size_t frames = frame_count(n, FrameSpec{});
    const auto f = extract_features(random_wave(n, i), test_model());
    const std::size_t expected = frames == 1 ? 1 : (frames / 2 == 1 ? 1 : frames / 2 / 2);
    EXPECT_EQ(f.size(), expected) << n;
    EXPECT_GE(f.size(), 1u);
  }
}

TEST(FrontendTest, TimeShiftShiftsRowsBeforePooling) {
  const auto w = random_wave(8000, 6);
  for (std::size_t k : {1u, 3u, 7u}) {
    Waveform shifted = random_wave(k * 80, 50 + k);
    shifted.samples.insert(shifted.samples.end(), w.samples.begin(), w.samples.end());
    const auto a = test_model().sinc_layer(w);
    const auto b = test_model().sinc_layer(shifted);
    ASSERT_EQ(b.rows(), a.rows() + k);
    for (std::size_t t = 0; t < a.rows(); ++t) {
      for (std::size_t c = 0; c < a.dim; ++c) ASSERT_EQ(a.row(t)[c], b.row(t + k)[c]);
    }
    // Interior of the first convolution shifts the same way.
    const auto ca = test_model().conv_stage(0, a);
    const auto cb = test_model().conv_stage(0, b);
    for (std::size_t t = 2; t + 2 < a.rows(); ++t) {
      for (std::size_t c = 0; c < ca.dim; ++c) ASSERT_EQ(ca.row(t)[c], cb.row(t + k)[c]);
    }
  }
}

TEST(FrontendTest, NonFiniteAudioIsRejected) {
  auto w = random_wave(2000, 8);
  w.samples[100] = std::numeric_limits<float>::quiet_NaN();
  try {
    extract_features(w, test_model());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidAudio);
  }
}

TEST(FrontendTest, TensorRoundTripPreservesBehaviour) {
  const auto& m = test_model();
  const auto bytes = m.to_tensors().serialize();
  const auto restored = FrontendModel::from_tensors(NamedTensorFile::deserialize(bytes));
  EXPECT_EQ(restored.content_hash(), m.content_hash());
  const auto w = random_wave(5000, 9);
  EXPECT_EQ(extract_features(w, restored).frames, extract_features(w, m).frames);
}

TEST(NamedTensorTest, RejectsCorruptInput) {
  NamedTensorFile f;
  f.put("a", {2}, {1.0f, 2.0f});
  auto bytes = f.serialize();
  bytes[0] = 'X';
  EXPECT_THROW(NamedTensorFile::deserialize(bytes), Error);
  bytes = f.serialize();
  bytes.pop_back();
  EXPECT_THROW(NamedTensorFile::deserialize(bytes), Error);
  EXPECT_THROW(f.put("b", {3}, {1.0f}), Error);
}

TEST(WavTest, RoundTripWithinQuantization) {
  const auto w = random_wave(3000, 10);
  const std::string path = ::testing::TempDir() + "/rt.wav";
  write_wav(path, w);
  const auto r = read_wav(path);
  ASSERT_EQ(r.samples.size(), w.samples.size());
  EXPECT_EQ(r.sample_rate, 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 16000.0);
  }
}

}  // namespace
}  // namespace speechcache::dsp
