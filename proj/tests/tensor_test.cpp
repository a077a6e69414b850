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
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "speechcache/tensor/adam.hpp"
#include "speechcache/tensor/gru.hpp"
#include "speechcache/tensor/tensor.hpp"

namespace speechcache::ad {
namespace {

using T = Tensor<double>;

T random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, bool grad = true,
                double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  auto t = T::zeros(std::move(shape), grad);
  for (auto& v : t.mutable_data()) v = n(rng);
  return t;
}

// Central differences against the recorded gradient of every input.
void expect_gradients_match(const std::function<T()>& f, std::vector<T> inputs,
                            double rel_tol = 1e-4, double step = 1e-5) {
  for (auto& x : inputs) x.zero_grad();
  backward(f());
  for (auto& x : inputs) {
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double keep = x.data()[i];
      double plus, minus;
      {
        NoGradGuard g;
        x.mutable_data()[i] = keep + step;
        plus = f().item();
        x.mutable_data()[i] = keep - step;
        minus = f().item();
      }
      x.mutable_data()[i] = keep;
      const double numeric = (plus - minus) / (2 * step);
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-3});
      EXPECT_LE(std::fabs(numeric - analytic[i]) / denom, rel_tol)
          << "element " << i << ": numeric " << numeric << " analytic " << analytic[i];
    }
  }
}

TEST(TensorTest, SumGradientIsOnes) {
  auto p = random_tensor({3, 4}, 1);
  backward(sum(p));
  for (double g : p.grad()) EXPECT_EQ(g, 1.0);
}

TEST(TensorTest, DotWithSelfGivesTwiceInput) {
  auto p = random_tensor({7}, 2);
  backward(dot(p, p));
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_DOUBLE_EQ(p.grad()[i], 2 * p.data()[i]);
}

TEST(TensorTest, GradientsAccumulateUntilCleared) {
  auto p = random_tensor({4}, 3);
  backward(sum(p));
  backward(sum(p));
  for (double g : p.grad()) EXPECT_EQ(g, 2.0);
  p.zero_grad();
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(TensorTest, DetachedLossHasNoGraph) {
  auto p = random_tensor({4}, 4, false);
  try {
    backward(sum(p));
    FAIL() << "expected NoGraph";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoGraph);
  }
  auto q = random_tensor({4}, 5);
  T s;
  {
    NoGradGuard g;
    s = sum(q);
  }
  EXPECT_THROW(backward(s), Error);
}

TEST(TensorTest, ElementwiseOpsMatchFiniteDifferences) {
  auto a = random_tensor({3, 4}, 10);
  auto b = random_tensor({3, 4}, 11);
  expect_gradients_match([&] { return sum(mul(sigmoid(a), tanh(sub(b, scale(a, 0.5))))); },
                         {a, b});
  expect_gradients_match([&] { return mean(mul(relu(add(a, b)), a)); }, {a, b});
}

TEST(TensorTest, MatrixOpsMatchFiniteDifferences) {
  auto x = random_tensor({5, 3}, 20);
  auto w = random_tensor({4, 3}, 21);
  auto bias = random_tensor({4}, 22);
  auto m = random_tensor({3, 2}, 23);
  auto r = random_tensor({2}, 24);
  expect_gradients_match(
      [&] {
        auto y = linear(x, w, bias);
        auto z = add_row(matmul(x, m), r);
        auto c = concat_cols(y, z);
        return dot(c, c);
      },
      {x, w, bias, m, r});
}

TEST(TensorTest, LogSoftmaxMatchesFiniteDifferences) {
  auto a = random_tensor({4, 6}, 30, true, 3.0);
  auto wts = random_tensor({4, 6}, 31, false);
  expect_gradients_match([&] { return sum(mul(log_softmax_rows(a), wts)); }, {a});
}

TEST(TensorTest, GruSequenceMatchesFiniteDifferences) {
  const std::size_t h = 3;
  auto xp = random_tensor({5, 3 * h}, 40);
  auto whh = random_tensor({3 * h, h}, 41);
  auto bhh = random_tensor({3 * h}, 42);
  auto wts = random_tensor({5, h}, 43, false);
  for (bool reverse : {false, true}) {
    expect_gradients_match(
        [&] { return sum(mul(gru_sequence(xp, whh, bhh, reverse), wts)); }, {xp, whh, bhh});
  }
}

TEST(TensorTest, ShapeMismatchIsRejected) {
  auto a = random_tensor({2, 3}, 50);
  auto b = random_tensor({3, 2}, 51);
  try {
    add(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeError);
  }
  EXPECT_THROW(matmul(a, a), Error);
  EXPECT_THROW(T::from({2, 2}, {1.0, 2.0}), Error);
}

TEST(TensorTest, NonFiniteResultIsNumericError) {
  auto a = T::from({2}, {1.0, std::numeric_limits<double>::infinity()});
  try {
    scale(a, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

GruStackConfig small_config() {
  GruStackConfig c;
  c.input_dim = 4;
  c.hidden = 8;
  c.layers = 2;
  c.outputs = 5;
  return c;
}

TEST(GruStackTest, RowsAreLogDistributions) {
  auto g = GruStack<float>::create(GruStackConfig{}, 3);
  RowMatrix<float> x = RowMatrix<float>::Random(17, 60);
  auto y = g.forward(x);
  ASSERT_EQ(y.rows(), 17u);
  ASSERT_EQ(y.cols(), 42u);
  for (std::size_t t = 0; t < y.rows(); ++t) {
    double s = 0;
    for (std::size_t k = 0; k < y.cols(); ++k) s += std::exp(static_cast<double>(y.at(t, k)));
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(GruStackTest, BadInputsAreShapeErrors) {
  auto g = GruStack<double>::create(small_config(), 3);
  try {
    g.forward(RowMatrix<double>(0, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeError);
  }
  try {
    g.forward(RowMatrix<double>::Zero(3, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeError);
  }
}

TEST(GruStackTest, DirectionsAreMirrorImages) {
  auto g = GruStack<double>::create(small_config(), 9);
  auto layer = g.layers()[0];
  layer[1] = {layer[0].w_ih.clone(), layer[0].w_hh.clone(), layer[0].b_ih.clone(),
              layer[0].b_hh.clone()};
  RowMatrix<double> x = RowMatrix<double>::Random(6, 4);
  RowMatrix<double> xr = x.colwise().reverse();
  auto out = GruStack<double>::bidirectional(layer, T::from_matrix(x));
  auto out_r = GruStack<double>::bidirectional(layer, T::from_matrix(xr));
  const std::size_t h = 8;
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t i = 0; i < h; ++i) {
      EXPECT_NEAR(out.at(t, i), out_r.at(5 - t, h + i), 1e-12);
      EXPECT_NEAR(out.at(t, h + i), out_r.at(5 - t, i), 1e-12);
    }
  }
}

TEST(GruStackTest, StackMatchesFiniteDifferences) {
  auto g = GruStack<double>::create(small_config(), 11);
  auto x = random_tensor({3, 4}, 60);
  auto wts = random_tensor({3, 5}, 61, false);
  auto params = g.parameters();
  params.push_back(x);
  expect_gradients_match([&] { return sum(mul(g.forward(x), wts)); }, params);
}

TEST(GruStackTest, TensorRoundTripIsExact) {
  auto g = GruStack<float>::create(small_config(), 5);
  auto bytes = g.to_tensors().serialize();
  auto back = GruStack<float>::from_tensors(NamedTensorFile::deserialize(bytes));
  EXPECT_EQ(back.content_hash(), g.content_hash());
  RowMatrix<float> x = RowMatrix<float>::Random(4, 4);
  auto a = g.forward(x), b = back.forward(x);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(GruStackTest, CloneIsIndependent) {
  auto g = GruStack<float>::create(small_config(), 5);
  auto c = g.clone();
  c.parameters()[0].mutable_data()[0] += 1.0f;
  EXPECT_NE(c.content_hash(), g.content_hash());
}

TEST(GruStackTest, FiniteInputsGiveFiniteOutputs) {
  auto g = GruStack<float>::create(small_config(), 8);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<float> u(-50.0f, 50.0f);
  std::uniform_int_distribution<int> len(1, 40);
  for (int trial = 0; trial < 50; ++trial) {
    RowMatrix<float> x(len(rng), 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    auto y = g.forward(x);
    for (float v : y.data()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  auto p = random_tensor({5}, 70);
  const std::vector<double> before(p.data().begin(), p.data().end());
  Adam<double> opt({p}, AdamConfig{});
  p.zero_grad();
  for (int i = 0; i < 10; ++i) opt.step();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p.data()[i], before[i]);
}

TEST(AdamTest, OnlyNonzeroGradientEntriesMove) {
  auto p = T::from({3}, {1.0, 2.0, 3.0}, true);
  Adam<double> opt({p}, AdamConfig{});
  p.zero_grad();
  p.node()->grad[1] = 0.5;
  opt.step();
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_NEAR(p.data()[1], 2.0 - 1e-4, 1e-10);
  EXPECT_EQ(p.data()[2], 3.0);
}

TEST(AdamTest, ConstantGradientStepsAtLearningRate) {
  auto p = T::from({2}, {0.0, 0.0}, true);
  Adam<double> opt({p}, AdamConfig{});
  for (int i = 0; i < 1000; ++i) {
    p.zero_grad();
    p.node()->grad = {3.0, -0.01};
    const double before0 = p.data()[0], before1 = p.data()[1];
    opt.step();
    if (i == 0) {
      EXPECT_NEAR(p.data()[0] - before0, -1e-4, 1e-9);
      EXPECT_NEAR(p.data()[1] - before1, 1e-4, 1e-9);
    }
    if (i == 999) {
      EXPECT_NEAR(std::fabs(p.data()[0] - before0), 1e-4, 5e-6);
      EXPECT_NEAR(std::fabs(p.data()[1] - before1), 1e-4, 5e-6);
    }
  }
}

TEST(AdamTest, GradScaleAveragesBatch) {
  auto a = T::from({1}, {0.0}, true);
  auto b = T::from({1}, {0.0}, true);
  Adam<double> oa({a}, AdamConfig{}), ob({b}, AdamConfig{});
  for (int i = 0; i < 5; ++i) {
    a.node()->grad = {16.0 * (i + 1)};
    oa.step(1.0 / 16);
    b.node()->grad = {1.0 * (i + 1)};
    ob.step();
  }
  EXPECT_NEAR(a.data()[0], b.data()[0], 1e-15);
}

}  // namespace
}  // namespace speechcache::ad
