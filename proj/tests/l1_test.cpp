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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "speechcache/l1/kmeans.hpp"
#include "speechcache/l1/l1_cache.hpp"
#include "test_util.hpp"

namespace speechcache::l1 {
namespace {

RowMatrix<float> random_points(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  RowMatrix<float> x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

TEST(KMeansTest, ExactFitOnDistinctPoints) {
  RowMatrix<float> x(3, 2);
  x << 0, 0, 5, 1, -3, 4;
  KMeansConfig cfg;
  cfg.k = 3;
  const auto r = kmeans(x, cfg, 1);
  EXPECT_EQ(r.inertia.back(), 0.0);
  std::vector<Symbol> ids = r.labels;
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<Symbol>{0, 1, 2}));
}

TEST(KMeansTest, TwoClustersOnALine) {
  RowMatrix<float> x(4, 1);
  x << 0, 0, 10, 10;
  KMeansConfig cfg;
  cfg.k = 2;
  const auto r = kmeans(x, cfg, 3);
  std::vector<float> c{r.centroids(0, 0), r.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c, (std::vector<float>{0.0f, 10.0f}));
}

TEST(KMeansTest, InertiaNeverIncreases) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_points(20 + trial % 40, 3, rng);
    KMeansConfig cfg;
    cfg.k = 2 + trial % 9;
    const auto r = kmeans(x, cfg, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 1; i < r.inertia.size(); ++i) {
      EXPECT_LE(r.inertia[i], r.inertia[i - 1] * (1 + 1e-12)) << "trial " << trial;
    }
  }
}

TEST(KMeansTest, KIsClampedToRowCount) {
  std::mt19937_64 rng(6);
  const auto x = random_points(5, 2, rng);
  const auto r = kmeans(x, KMeansConfig{}, 1);
  EXPECT_TRUE(r.clamped);
  EXPECT_EQ(r.centroids.rows(), 5);
}

TEST(KMeansTest, IdenticalRowsGiveDistinctCentroids) {
  const RowMatrix<float> x = RowMatrix<float>::Constant(30, 4, 0.25f);
  KMeansConfig cfg;
  cfg.k = 6;
  const auto r = kmeans(x, cfg, 2);
  EXPECT_EQ(r.effective_k, 1u);
  for (Eigen::Index i = 0; i < r.centroids.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) EXPECT_NE(r.centroids.row(i), r.centroids.row(j));
  }
  // Every frame keeps the unperturbed centroid.
  const auto ids = assign_nearest(x, r.centroids);
  for (Symbol s : ids) EXPECT_EQ(s, ids[0]);
}

TEST(KMeansTest, SeedDeterminesResult) {
  std::mt19937_64 rng(8);
  const auto x = random_points(100, 5, rng);
  KMeansConfig cfg;
  cfg.k = 7;
  EXPECT_EQ(kmeans(x, cfg, 4).centroids, kmeans(x, cfg, 4).centroids);
}

class L1CacheTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new harness::Corpus(harness::synth_dataset(testing::long_spec(21, 6, 2)));
  }
  static void TearDownTestSuite() { delete corpus_; }
  static RowMatrix<float> feats(int t, int r) {
    return testing::features(*corpus_, "spk0_t" + std::to_string(t) + "_r" + std::to_string(r));
  }
  static harness::Corpus* corpus_;
};
harness::Corpus* L1CacheTest::corpus_ = nullptr;

TEST_F(L1CacheTest, KeyIsCollapsedAndInRange) {
  const auto e = build_entry(feats(0, 0), 3, "t0", L1Config{}, 1);
  ASSERT_FALSE(e.key.empty());
  for (std::size_t i = 0; i < e.key.size(); ++i) {
    EXPECT_LT(static_cast<std::size_t>(e.key[i]), e.centroids.size());
    if (i) {
      EXPECT_NE(e.key[i], e.key[i - 1]);
    }
  }
  EXPECT_EQ(e.centroids.size(), 70u);
}

TEST_F(L1CacheTest, BuildIsDeterministic) {
  const auto a = build_entry(feats(1, 0), 1, "t1", L1Config{}, 9);
  const auto b = build_entry(feats(1, 0), 1, "t1", L1Config{}, 9);
  EXPECT_EQ(a.key, b.key);
  EXPECT_EQ(a.centroids.centroids, b.centroids.centroids);
}

TEST_F(L1CacheTest, SelfMatchIsNearZeroAndBeatsRandomEntries) {
  const L1Config cfg;
  const auto x = feats(2, 0);
  const auto e = build_entry(x, 2, "t2", cfg, 4);
  const double self = entry_loss(x, e, cfg);
  EXPECT_LT(self, 0.1);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  for (int i = 0; i < 10; ++i) {
    dsp::Waveform w;
    w.samples.resize(static_cast<std::size_t>(corpus_->wave("spk0_t2_r0").samples.size()));
    for (auto& s : w.samples) s = u(rng);
    const auto decoy = build_entry(testing::features(w), 0, "noise", cfg, 4);
    EXPECT_GT(entry_loss(x, decoy, cfg), self);
  }
}

TEST_F(L1CacheTest, DistributionsAreValidAndArgmaxConsistent) {
  const auto x = feats(3, 0);
  for (auto mode : {Distribution::kSoftmax, Distribution::kInverseNormalized}) {
    L1Config cfg;
    cfg.distribution = mode;
    const auto e = build_entry(x, 0, "t3", cfg, 2);
    // Frames placed exactly on centroids.
    const auto& c = e.centroids.centroids;
    const auto p = frame_distributions(c, e.centroids, cfg);
    p.validate(1e-6);
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      Eigen::Index arg;
      p.log_probs.row(j).maxCoeff(&arg);
      EXPECT_EQ(arg, j);
    }
    frame_distributions(x, e.centroids, cfg).validate(1e-6);
  }
}

TEST_F(L1CacheTest, EmptyCacheMisses) {
  const auto r = match(feats(0, 0), std::span<const L1Entry>{}, [](std::size_t) { return 1e9; },
                       L1Config{});
  EXPECT_FALSE(r.best.has_value());
  EXPECT_FALSE(r.hit);
}

TEST_F(L1CacheTest, ReplayHitsItsOwnEntryRegardlessOfOrder) {
  const L1Config cfg;
  std::vector<L1Entry> entries;
  for (int t = 0; t < 6; ++t) {
    entries.push_back(build_entry(feats(t, 0), static_cast<IntentId>(t), "t" + std::to_string(t), cfg, 3));
  }
  auto thr = [](std::size_t) { return 1.0; };
  for (int t = 0; t < 6; ++t) {
    const auto r = match(feats(t, 0), entries, thr, cfg);
    ASSERT_TRUE(r.hit);
    EXPECT_EQ(entries[*r.best].intent, static_cast<IntentId>(t));
    EXPECT_LE(r.loss, 1.0);
  }
  // Same winner under a permutation of the entry list.
  std::vector<L1Entry> shuffled(entries.rbegin(), entries.rend());
  for (int t = 0; t < 6; ++t) {
    const auto a = match(feats(t, 1), entries, thr, cfg);
    const auto b = match(feats(t, 1), shuffled, thr, cfg);
    ASSERT_TRUE(a.best && b.best);
    EXPECT_EQ(entries[*a.best].intent, shuffled[*b.best].intent);
    EXPECT_EQ(a.loss, b.loss);
  }
}

TEST_F(L1CacheTest, JitteredRepeatPrefersItsTranscript) {
  const L1Config cfg;
  std::vector<L1Entry> entries;
  for (int t = 0; t < 6; ++t) {
    entries.push_back(build_entry(feats(t, 0), static_cast<IntentId>(t), "t", cfg, 3));
  }
  int correct = 0;
  for (int t = 0; t < 6; ++t) {
    const auto r = match(feats(t, 1), entries, [](std::size_t) { return 1e9; }, cfg);
    correct += r.best && entries[*r.best].intent == static_cast<IntentId>(t);
  }
  EXPECT_GE(correct, 5);
}

TEST_F(L1CacheTest, HitImpliesLossWithinThreshold) {
  const L1Config cfg;
  std::vector<L1Entry> entries{build_entry(feats(4, 0), 4, "t4", cfg, 3)};
  const auto x = feats(4, 1);
  const double loss = entry_loss(x, entries[0], cfg);
  EXPECT_TRUE(match(x, entries, [&](std::size_t) { return loss; }, cfg).hit);
  EXPECT_FALSE(match(x, entries, [&](std::size_t) { return loss * 0.99; }, cfg).hit);
}

TEST_F(L1CacheTest, ShortQueryCannotAlignToLongKey) {
  const L1Config cfg;
  const auto e = build_entry(feats(5, 0), 5, "t5", cfg, 3);
  const RowMatrix<float> tiny = feats(5, 0).topRows(static_cast<Eigen::Index>(e.key.size()) - 1);
  EXPECT_TRUE(std::isinf(entry_loss(tiny, e, cfg)));
}

TEST_F(L1CacheTest, PersistenceRoundTrip) {
  auto e = build_entry(feats(0, 0), 42, "transcript-0", L1Config{}, 3, nullptr, "spk0_t0_r0");
  e.created_at = 7;
  e.last_hit = 9;
  ByteWriter w;
  write_entry(w, e);
  const auto bytes = w.take();
  EXPECT_EQ(bytes.size(), e.byte_size());
  EXPECT_GT(bytes.size(), 70u * 60u * 4u);  // centroid block dominates
  ByteReader r(bytes);
  const auto back = read_entry(r);
  EXPECT_EQ(back.key, e.key);
  EXPECT_EQ(back.centroids.centroids, e.centroids.centroids);
  EXPECT_EQ(back.intent, 42u);
  EXPECT_EQ(back.transcript_id, "transcript-0");
  EXPECT_EQ(back.centroids.utterance_id, "spk0_t0_r0");
  EXPECT_EQ(back.created_at, 7u);
  EXPECT_EQ(back.last_hit, 9u);

  auto broken = bytes;
  broken.resize(broken.size() / 2);
  ByteReader rb(broken);
  try {
    read_entry(rb);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kFormat);
  }
}

TEST(L1SeparationTest, CrossMatchExceedsSelfMatch) {
  const L1Config cfg;
  int separated = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    harness::SynthSpec s;
    s.seed = 1000 + static_cast<std::uint64_t>(trial);
    s.transcripts = 2;
    s.repeats = 1;
    s.words_min = 3;
    s.words_max = 5;
    const auto c = harness::synth_dataset(s);
    const auto xa = testing::features(c, "spk0_t0_r0");
    const auto xb = testing::features(c, "spk0_t1_r0");
    const auto ea = build_entry(xa, 0, "a", cfg, s.seed);
    const auto eb = build_entry(xb, 1, "b", cfg, s.seed);
    separated += entry_loss(xa, eb, cfg) > entry_loss(xa, ea, cfg) &&
                 entry_loss(xb, ea, cfg) > entry_loss(xb, eb, cfg);
  }
  EXPECT_GE(separated, trials * 95 / 100);
}

}  // namespace
}  // namespace speechcache::l1
