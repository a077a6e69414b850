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
#include <vector>

#include <gtest/gtest.h>

#include "speechcache/cloud/augment.hpp"
#include "speechcache/cloud/finetune.hpp"
#include "speechcache/cloud/lexicon.hpp"
#include "speechcache/l2/l2_cache.hpp"
#include "speechcache/l2/phonemes.hpp"
#include "test_util.hpp"

namespace speechcache::l2 {
namespace {

ad::GruStackConfig small_model() {
  ad::GruStackConfig c;
  c.hidden = 32;
  return c;
}

TEST(PhonemeTest, AlphabetShape) {
  EXPECT_EQ(kAlphabetSize, 42u);
  EXPECT_EQ(symbol_name(kBlank), "sp");
  EXPECT_EQ(symbol_id("AH0"), symbol_id("AH"));
  EXPECT_EQ(symbol_id("dx"), 41);
  EXPECT_FALSE(symbol_id("QQ").has_value());
  for (std::size_t i = 0; i < kAlphabetSize; ++i) {
    EXPECT_EQ(symbol_id(kSymbols[i]), static_cast<Symbol>(i));
  }
}

class L2CacheTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    harness::SynthSpec s;
    s.seed = 31;
    s.transcripts = 11;
    s.repeats = 2;
    corpus_ = new harness::Corpus(harness::synth_dataset(s));
  }
  static void TearDownTestSuite() { delete corpus_; }

  static std::string id(int t, int r) {
    return "spk0_t" + std::to_string(t) + "_r" + std::to_string(r);
  }
  static L2Entry entry(int t) {
    const auto tok = cloud::tokenize(corpus_->manifest.at(id(t, 0)).transcript, corpus_->lexicon);
    return {tok.target, tok.transport, static_cast<IntentId>(t), id(t, 0)};
  }
  static harness::Corpus* corpus_;
};
harness::Corpus* L2CacheTest::corpus_ = nullptr;

TEST_F(L2CacheTest, PosteriorsAreNormalizedAndDeterministic) {
  const auto model = PhonemeModel::create(small_model(), 1);
  const auto x = testing::features(*corpus_, id(0, 0));
  const auto a = phoneme_posteriors(x, model);
  const auto b = phoneme_posteriors(x, model);
  ASSERT_EQ(a.symbols(), 42u);
  ASSERT_EQ(a.frames(), static_cast<std::size_t>(x.rows()));
  a.validate(1e-6);
  EXPECT_EQ(a.log_probs, b.log_probs);
}

TEST_F(L2CacheTest, WrongInputDimIsShapeError) {
  const auto model = PhonemeModel::create(small_model(), 1);
  try {
    phoneme_posteriors(RowMatrix<float>::Zero(10, 12), model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeError);
  }
}

TEST_F(L2CacheTest, EmptyCacheMisses) {
  const auto model = PhonemeModel::create(small_model(), 1);
  const auto r = match(testing::features(*corpus_, id(0, 0)), model, std::span<const L2Entry>{},
                       [](std::size_t) { return 1e9; });
  EXPECT_FALSE(r.best.has_value());
  EXPECT_FALSE(r.hit);
}

TEST_F(L2CacheTest, OverlongKeyIsSkipped) {
  const auto model = PhonemeModel::create(small_model(), 1);
  const auto x = testing::features(*corpus_, id(0, 0));
  L2Entry longer = entry(1);
  longer.key.assign(static_cast<std::size_t>(x.rows()) + 1, 5);
  for (std::size_t i = 1; i < longer.key.size(); i += 2) longer.key[i] = 6;
  std::vector<L2Entry> entries{longer, entry(2)};
  const auto r = match(x, model, entries, [](std::size_t) { return 1e9; });
  ASSERT_TRUE(r.best.has_value());
  EXPECT_EQ(*r.best, 1u);
  EXPECT_TRUE(std::isinf(entry_loss(phoneme_posteriors(x, model), longer)));
}

TEST_F(L2CacheTest, LossesAreFiniteAndNonNegative) {
  const auto model = PhonemeModel::create(small_model(), 1);
  for (int t = 0; t < 11; ++t) {
    const auto p = phoneme_posteriors(testing::features(*corpus_, id(t, 1)), model);
    for (int e = 0; e < 11; ++e) {
      const double l = entry_loss(p, entry(e));
      EXPECT_TRUE(std::isfinite(l));
      EXPECT_GE(l, 0.0);
    }
  }
}

TEST_F(L2CacheTest, FinetunedReplayBeatsDecoys) {
  auto model = PhonemeModel::create(small_model(), 3);
  std::vector<cloud::TrainExample> pool;
  for (int t = 0; t < 11; ++t) {
    const auto e = entry(t);
    pool.push_back({testing::features(*corpus_, id(t, 0)), e.key});
    for (const auto& a : cloud::augment(corpus_->wave(id(t, 0)), cloud::AugmentSpec{}, t)) {
      pool.push_back({testing::features(a.wave), e.key});
    }
  }
  const auto x = testing::features(*corpus_, id(0, 0));
  const double before = entry_loss(phoneme_posteriors(x, model), entry(0));
  cloud::FinetuneConfig cfg;
  cfg.adam.lr = 3e-3;
  cfg.max_epochs = 15;
  cfg.seed = 1;
  cloud::finetune(model, pool, cfg);
  const auto p = phoneme_posteriors(x, model);
  const double after = entry_loss(p, entry(0));
  EXPECT_LT(after, before);
  for (int t = 1; t < 11; ++t) EXPECT_LT(after, entry_loss(p, entry(t))) << "decoy " << t;

  std::vector<L2Entry> entries;
  for (int t = 0; t < 11; ++t) entries.push_back(entry(t));
  const auto r = match(x, model, entries, [&](std::size_t) { return after; });
  EXPECT_TRUE(r.hit);
  EXPECT_EQ(*r.best, 0u);
}

TEST_F(L2CacheTest, PersistenceRoundTripIsCompact) {
  auto e = entry(4);
  e.created_at = 3;
  e.last_hit = 8;
  ByteWriter w;
  write_entry(w, e);
  const auto bytes = w.take();
  EXPECT_EQ(bytes.size(), e.byte_size());
  EXPECT_LT(bytes.size(), 200u);
  ByteReader r(bytes);
  const auto back = read_entry(r);
  EXPECT_EQ(back.key, e.key);
  EXPECT_EQ(back.transport, e.transport);
  EXPECT_EQ(back.intent, e.intent);
  EXPECT_EQ(back.transcript_id, e.transcript_id);
  EXPECT_EQ(back.created_at, 3u);
  EXPECT_EQ(back.last_hit, 8u);

  auto bad = bytes;
  bad[6] = 0;  // first key phoneme -> blank
  ByteReader rb(bad);
  EXPECT_THROW(read_entry(rb), Error);
}

TEST_F(L2CacheTest, DescribeShowsWordBoundaries) {
  const auto e = entry(0);
  const auto s = describe(e.transport);
  EXPECT_NE(s.find('|'), std::string::npos);
  EXPECT_EQ(describe(e.key).find('|'), std::string::npos);
}

}  // namespace
}  // namespace speechcache::l2
