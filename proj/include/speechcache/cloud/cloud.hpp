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

#ifndef SPEECHCACHE_CLOUD_CLOUD_HPP_
#define SPEECHCACHE_CLOUD_CLOUD_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechcache/cache/manager.hpp"
#include "speechcache/cloud/augment.hpp"
#include "speechcache/cloud/finetune.hpp"
#include "speechcache/cloud/lexicon.hpp"
#include "speechcache/dsp/frontend.hpp"
#include "speechcache/error.hpp"
#include "speechcache/harness/manifest.hpp"
#include "speechcache/l1/l1_cache.hpp"
#include "speechcache/l2/l2_cache.hpp"

namespace speechcache::cloud {

using cache::kBuckets;
using cache::PhonemeModelPtr;

struct CloudConfig {
  std::size_t push_every = 100;  // N
  AugmentSpec augment;
  bool augment_enabled = true;
  bool l1_fit_augmented = true;  // k-means on original + augmented frames
  l1::L1Config l1;
  cache::BucketConfig buckets;
  // An example trains every bucket whose interval comes within this
  // fraction of its duration.
  double bucket_margin = 0.05;
  bool finetune_enabled = true;
  FinetuneConfig finetune;
  std::uint64_t seed = 1;
};

struct ModelPush {
  std::uint64_t at_offload = 0;
  std::array<PhonemeModelPtr, kBuckets> models;
  std::array<std::uint64_t, kBuckets> hashes{};
};

struct OffloadRequest {
  std::string device_id;
  std::string utterance_id;
  const dsp::Waveform* wave = nullptr;
  const RowMatrix<float>* features = nullptr;  // optional, saves a front-end pass
  // Label-only requests (frozen test phase) return the intent and leave the
  // counter, pools and shadow models alone.
  bool learn = true;
};

struct OffloadResponse {
  IntentId intent = 0;
  std::string intent_label;
  Tokenized phonemes;
  int bucket = 1;
  std::optional<l1::L1Entry> l1;
  std::optional<l2::L2Entry> l2;
  std::optional<ModelPush> push;
  std::vector<RowMatrix<float>> augmented;  // features of the augmented copies
  std::uint64_t offload_index = 0;  // counter after this request; 0 for label-only
};

struct BucketTraining {
  std::size_t pool_size = 0;
  std::size_t rounds = 0;
  std::size_t diverged = 0;
  std::optional<FinetuneReport> last;
};

// Buckets whose duration interval intersects [d(1-m), d(1+m)].
inline std::vector<int> training_buckets(double duration_s, const cache::BucketConfig& b,
                                         double margin) {
  const double lo = duration_s * (1.0 - margin), hi = duration_s * (1.0 + margin);
  std::vector<int> out;
  if (lo <= b.b1) out.push_back(1);
  if (hi > b.b1 && lo < b.b2) out.push_back(2);
  if (hi >= b.b2) out.push_back(3);
  return out;
}

inline RowMatrix<float> stack_rows(const std::vector<RowMatrix<float>>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  RowMatrix<float> out(rows, parts.empty() ? 0 : parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

// Manifest-oracle cloud: gold intents, lexicon phonemes, new entries, and
// per-bucket shadow models that are finetuned lazily and pushed every N
// learning offloads.
class Cloud {
 public:
  Cloud(const harness::Manifest& manifest, const Lexicon& lexicon,
        std::shared_ptr<const dsp::FrontendModel> frontend, CloudConfig cfg,
        const l2::PhonemeModel& initial)
      : manifest_(manifest), lexicon_(lexicon), frontend_(std::move(frontend)),
        cfg_(std::move(cfg)) {
    SC_CHECK(frontend_ != nullptr, ErrorCode::kConfig, "cloud needs a front-end");
    SC_CHECK(cfg_.push_every >= 1, ErrorCode::kConfig, "push interval must be positive");
    // Every transcript must tokenize before any traffic.
    for (const auto& r : manifest_.records()) tokenize(r.transcript, lexicon_);
    for (auto& m : shadow_) m = initial.clone();
    frontend_hash_ = frontend_->content_hash();
  }

  const CloudConfig& config() const { return cfg_; }
  std::uint64_t offloads() const { return counter_; }
  const l2::PhonemeModel& shadow(int bucket) const { return shadow_[idx(bucket)]; }
  const std::vector<TrainExample>& pool(int bucket) const { return pools_[idx(bucket)]; }
  const BucketTraining& training(int bucket) const { return training_[idx(bucket)]; }
  std::uint64_t frontend_hash() const { return frontend_hash_; }

  void set_trace(std::ostream* out) { trace_ = out; }

  OffloadResponse resolve(const OffloadRequest& req) {
    const auto& rec = manifest_.at(req.utterance_id);
    SC_CHECK(req.wave != nullptr, ErrorCode::kInvalidAudio, "offload without audio");
    OffloadResponse resp;
    resp.intent_label = rec.intent;
    resp.intent = manifest_.intent_id(rec.intent);
    resp.phonemes = tokenize(rec.transcript, lexicon_);
    const auto r = cache::route(req.wave->duration_s(), cfg_.buckets);
    resp.bucket = r.bucket;
    if (!req.learn) {
      trace(req, resp);
      return resp;
    }

    const std::uint64_t seed = cfg_.seed ^ (0x9e3779b97f4a7c15ULL * (counter_ + 1));
    RowMatrix<float> own =
        req.features ? *req.features : dsp::extract_features(*req.wave, *frontend_).frames;
    std::vector<const dsp::Waveform*> waves{req.wave};
    std::vector<RowMatrix<float>> feats{own};
    std::vector<Augmented> augs;
    if (cfg_.augment_enabled) {
      augs = augment(*req.wave, cfg_.augment, seed);
      for (const auto& a : augs) {
        waves.push_back(&a.wave);
        feats.push_back(dsp::extract_features(a.wave, *frontend_).frames);
      }
    }

    if (!r.bypass_l1) {
      std::optional<RowMatrix<float>> extra;
      if (cfg_.l1_fit_augmented && feats.size() > 1) {
        extra = stack_rows(std::vector<RowMatrix<float>>(feats.begin() + 1, feats.end()));
      }
      resp.l1 = l1::build_entry(own, resp.intent, rec.utterance_id, cfg_.l1, seed,
                                extra ? &*extra : nullptr, rec.utterance_id);
    }
    l2::L2Entry e2;
    e2.key = resp.phonemes.target;
    e2.transport = resp.phonemes.transport;
    e2.intent = resp.intent;
    e2.transcript_id = rec.utterance_id;
    resp.l2 = std::move(e2);

    for (std::size_t i = 0; i < feats.size(); ++i) {
      for (int b : training_buckets(waves[i]->duration_s(), cfg_.buckets, cfg_.bucket_margin)) {
        pools_[idx(b)].push_back(TrainExample{feats[i], resp.phonemes.target});
        dirty_[idx(b)] = true;
      }
    }
    feats.erase(feats.begin());
    resp.augmented = std::move(feats);
    resp.offload_index = ++counter_;
    if (counter_ % cfg_.push_every == 0) resp.push = sync();
    trace(req, resp);
    return resp;
  }

  // Finetunes every bucket with new data and snapshots all shadow models.
  ModelPush sync() {
    for (std::size_t b = 0; b < kBuckets; ++b) {
      auto& t = training_[b];
      t.pool_size = pools_[b].size();
      if (!dirty_[b] || pools_[b].empty() || !cfg_.finetune_enabled) continue;
      dirty_[b] = false;
      auto fc = cfg_.finetune;
      fc.seed = cfg_.finetune.seed ^ (b + 1) ^ (counter_ << 8);
      ++t.rounds;
      try {
        t.last = finetune(shadow_[b], pools_[b], fc);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kTrainingDiverged) throw;
        ++t.diverged;  // shadow already rolled back
      }
    }
    SC_CHECK(frontend_->content_hash() == frontend_hash_, ErrorCode::kConfig,
             "front-end changed during training");
    ModelPush p;
    p.at_offload = counter_;
    for (std::size_t b = 0; b < kBuckets; ++b) {
      auto snap = std::make_shared<l2::PhonemeModel>(shadow_[b].clone());
      snap->set_requires_grad(false);
      p.hashes[b] = snap->content_hash();
      p.models[b] = std::move(snap);
    }
    return p;
  }

 private:
  static std::size_t idx(int bucket) {
    SC_CHECK(bucket >= 1 && bucket <= static_cast<int>(kBuckets), ErrorCode::kConfig,
             "bucket out of range");
    return static_cast<std::size_t>(bucket - 1);
  }

  void trace(const OffloadRequest& req, const OffloadResponse& resp) {
    if (!trace_) return;
    nlohmann::ordered_json j;
    j["device"] = req.device_id;
    j["utterance_id"] = req.utterance_id;
    j["learn"] = req.learn;
    j["offload"] = resp.offload_index;
    j["bucket"] = resp.bucket;
    j["intent"] = resp.intent_label;
    std::string ph;
    for (Symbol s : resp.phonemes.transport) {
      if (!ph.empty()) ph += ' ';
      ph += s == l2::kBlank ? std::string("|") : std::string(l2::symbol_name(s));
    }
    j["phonemes"] = ph;
    if (resp.l1) j["l1_key_length"] = resp.l1->key.size();
    if (resp.push) {
      auto& p = j["push"];
      for (auto h : resp.push->hashes) p.push_back(h);
    }
    *trace_ << j.dump() << '\n';
  }

  const harness::Manifest& manifest_;
  const Lexicon& lexicon_;
  std::shared_ptr<const dsp::FrontendModel> frontend_;
  CloudConfig cfg_;
  std::uint64_t frontend_hash_ = 0;
  std::uint64_t counter_ = 0;
  std::array<l2::PhonemeModel, kBuckets> shadow_;
  std::array<std::vector<TrainExample>, kBuckets> pools_;
  std::array<bool, kBuckets> dirty_{};
  std::array<BucketTraining, kBuckets> training_;
  std::ostream* trace_ = nullptr;
};

// Trains `model` on a seeded `fraction` of the manifest's utterances
// (original audio only). Fraction 0 leaves the model untouched.
template <typename AudioFn>
FinetuneReport in_domain_pretrain(l2::PhonemeModel& model, const harness::Manifest& manifest,
                                  const Lexicon& lexicon, AudioFn&& audio,
                                  const dsp::FrontendModel& frontend, double fraction,
                                  const FinetuneConfig& cfg, std::uint64_t seed) {
  SC_CHECK(fraction >= 0.0 && fraction <= 1.0, ErrorCode::kConfig,
           "pretraining fraction must be in [0, 1]");
  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  if (n == 0) return {};
  std::vector<TrainExample> pool;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = manifest[order[i]];
    pool.push_back(TrainExample{dsp::extract_features(audio(r.utterance_id), frontend).frames,
                                tokenize(r.transcript, lexicon).target});
  }
  return finetune(model, pool, cfg);
}

}  // namespace speechcache::cloud

#endif  // SPEECHCACHE_CLOUD_CLOUD_HPP_
