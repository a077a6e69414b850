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

#ifndef SPEECHCACHE_CACHE_MANAGER_HPP_
#define SPEECHCACHE_CACHE_MANAGER_HPP_

#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechcache/cache/store.hpp"
#include "speechcache/cache/threshold_mlp.hpp"
#include "speechcache/dsp/frontend.hpp"
#include "speechcache/error.hpp"
#include "speechcache/l1/l1_cache.hpp"
#include "speechcache/l2/l2_cache.hpp"
#include "speechcache/l2/phonemes.hpp"

namespace speechcache::cache {

inline constexpr std::size_t kBuckets = 3;

// Disjoint duration buckets (0, b1], (b1, b2), [b2, inf), numbered 1..3.
struct BucketConfig {
  double b1 = 2.7;
  double b2 = 4.0;
  bool bypass_l1_bucket1 = true;
};

struct Route {
  int bucket = 1;  // 1-based
  bool bypass_l1 = false;
};

inline Route route(double duration_s, const BucketConfig& cfg) {
  SC_CHECK(duration_s > 0.0, ErrorCode::kInvalidAudio, "duration must be positive");
  SC_CHECK(cfg.b1 > 0.0 && cfg.b1 < cfg.b2, ErrorCode::kConfig, "bucket bounds out of order");
  Route r;
  if (duration_s <= cfg.b1) {
    r.bucket = 1;
    r.bypass_l1 = cfg.bypass_l1_bucket1;
  } else if (duration_s < cfg.b2) {
    r.bucket = 2;
  } else {
    r.bucket = 3;
  }
  return r;
}

// Static per-bucket thresholds on normalized loss, optionally replaced by a
// per-level MLP over key length.
struct ThresholdPolicy {
  std::array<double, kBuckets> l1{6.0, 6.0, 6.0};
  std::array<double, kBuckets> l2{2.0, 2.0, 2.0};
  std::optional<ThresholdMlp> l1_mlp;
  std::optional<ThresholdMlp> l2_mlp;

  double l1_threshold(int bucket, std::size_t key_length) const {
    return l1_mlp ? (*l1_mlp)(key_length) : l1[static_cast<std::size_t>(bucket - 1)];
  }
  double l2_threshold(int bucket, std::size_t key_length) const {
    return l2_mlp ? (*l2_mlp)(key_length) : l2[static_cast<std::size_t>(bucket - 1)];
  }
};

struct DeviceConfig {
  StoreConfig store;
  BucketConfig buckets;
  l1::L1Config l1;
  ThresholdPolicy thresholds;
};

enum class Level { kL1Hit, kL2Hit, kOffload };

inline const char* to_string(Level l) {
  switch (l) {
    case Level::kL1Hit: return "l1_hit";
    case Level::kL2Hit: return "l2_hit";
    case Level::kOffload: return "offload";
  }
  return "?";
}

struct LookupOutcome {
  Level level = Level::kOffload;
  std::optional<IntentId> intent;  // set on hits; offloads get the cloud label
  Route route;
  bool l1_queried = false;
  bool l2_queried = false;
  double l1_loss = std::numeric_limits<double>::infinity();
  double l2_loss = std::numeric_limits<double>::infinity();
  std::optional<std::uint64_t> record_id;
  std::string transcript_id;  // of the hit record
};

using PhonemeModelPtr = std::shared_ptr<const l2::PhonemeModel>;

struct WarmUpReport {
  std::size_t loaded = 0;
  std::size_t dropped = 0;  // beyond capacity
  std::vector<std::string> warnings;
};

// One simulated device: frozen front-end, one phoneme model per bucket, and
// the entry store. Calls are expected to be serialized per device; model
// pushes swap an immutable snapshot, so a lookup in flight keeps the model
// it started with.
class Device {
 public:
  Device(DeviceConfig cfg, std::shared_ptr<const dsp::FrontendModel> frontend,
         std::array<PhonemeModelPtr, kBuckets> models)
      : cfg_(std::move(cfg)), frontend_(std::move(frontend)), models_(std::move(models)),
        store_(cfg_.store) {
    SC_CHECK(frontend_ != nullptr, ErrorCode::kConfig, "device needs a front-end");
    for (const auto& m : models_) SC_CHECK(m != nullptr, ErrorCode::kConfig, "missing bucket model");
  }

  const DeviceConfig& config() const { return cfg_; }
  DeviceConfig& mutable_config() { return cfg_; }
  const CacheStore& store() const { return store_; }
  const dsp::FrontendModel& frontend() const { return *frontend_; }

  PhonemeModelPtr model(int bucket) const {
    std::lock_guard<std::mutex> lock(model_mutex_);
    return models_[static_cast<std::size_t>(bucket - 1)];
  }

  void push_model(int bucket, PhonemeModelPtr m) {
    SC_CHECK(bucket >= 1 && bucket <= static_cast<int>(kBuckets) && m, ErrorCode::kConfig,
             "bad model push");
    std::lock_guard<std::mutex> lock(model_mutex_);
    models_[static_cast<std::size_t>(bucket - 1)] = std::move(m);
  }

  LookupOutcome lookup(const dsp::Waveform& wave) {
    const auto features = dsp::extract_features(wave, *frontend_);
    return lookup_features(features.frames, wave.duration_s());
  }

  // L1 (unless bypassed) -> L2 -> offload. A hit only refreshes recency.
  LookupOutcome lookup_features(const RowMatrix<float>& features, double duration_s) {
    LookupOutcome out;
    out.route = route(duration_s, cfg_.buckets);
    const int bucket = out.route.bucket;
    if (store_.empty()) return out;

    if (!out.route.bypass_l1) {
      std::vector<const l1::L1Entry*> l1s;
      std::vector<std::uint64_t> ids;
      for (const auto& r : store_.records()) {
        if (!r.l1) continue;
        l1s.push_back(&*r.l1);
        ids.push_back(r.id);
      }
      if (!l1s.empty()) {
        out.l1_queried = true;
        const auto m = l1::match(
            features, std::span<const l1::L1Entry* const>(l1s),
            [&](std::size_t len) { return cfg_.thresholds.l1_threshold(bucket, len); }, cfg_.l1);
        out.l1_loss = m.loss;
        if (m.hit) return hit(out, Level::kL1Hit, ids[*m.best]);
      }
    }

    std::vector<const l2::L2Entry*> l2s;
    std::vector<std::uint64_t> ids;
    for (const auto& r : store_.records()) {
      l2s.push_back(&r.l2);
      ids.push_back(r.id);
    }
    out.l2_queried = true;
    const auto snapshot = model(bucket);
    const auto posts = l2::phoneme_posteriors(features, *snapshot);
    const auto m = l2::match(posts, std::span<const l2::L2Entry* const>(l2s), [&](std::size_t len) {
      return cfg_.thresholds.l2_threshold(bucket, len);
    });
    out.l2_loss = m.loss;
    if (m.hit) return hit(out, Level::kL2Hit, ids[*m.best]);
    return out;
  }

  std::vector<std::uint64_t> install(std::optional<l1::L1Entry> l1, l2::L2Entry l2) {
    return store_.install(std::move(l1), std::move(l2));
  }

  void replace_store(CacheStore s) { store_ = std::move(s); }

  // Preload from JSON lines (see preload_line); stops at capacity.
  WarmUpReport warm_up(std::istream& in) {
    WarmUpReport rep;
    std::vector<std::pair<std::optional<l1::L1Entry>, l2::L2Entry>> parsed;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        parsed.push_back(parse_preload(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kBadPreload, "preload line " + std::to_string(lineno) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(ErrorCode::kBadPreload, "preload line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    for (auto& [a, b] : parsed) {
      if (store_.size() >= cfg_.store.capacity) {
        ++rep.dropped;
        continue;
      }
      store_.install(std::move(a), std::move(b));
      ++rep.loaded;
    }
    if (rep.dropped) {
      rep.warnings.push_back("preload truncated to capacity: dropped " +
                             std::to_string(rep.dropped) + " entries");
    }
    return rep;
  }

 private:
  LookupOutcome& hit(LookupOutcome& out, Level level, std::uint64_t id) {
    const auto* rec = store_.find(id);
    out.level = level;
    out.intent = rec->intent;
    out.record_id = id;
    out.transcript_id = rec->l2.transcript_id;
    store_.touch(id);
    return out;
  }

  static std::pair<std::optional<l1::L1Entry>, l2::L2Entry> parse_preload(const nlohmann::json& j) {
    l2::L2Entry e2;
    e2.intent = j.at("intent").get<IntentId>();
    e2.transcript_id = j.value("transcript_id", std::string());
    std::istringstream ph(j.at("phonemes").get<std::string>());
    std::string tok;
    while (ph >> tok) {
      if (tok == "|") {
        SC_CHECK(!e2.transport.empty(), ErrorCode::kBadPreload, "leading word boundary");
        e2.transport.push_back(l2::kBlank);
        continue;
      }
      const auto id = l2::symbol_id(tok);
      SC_CHECK(id && *id != l2::kBlank, ErrorCode::kBadPreload, "unknown phoneme '" + tok + "'");
      e2.transport.push_back(*id);
      e2.key.push_back(*id);
    }
    SC_CHECK(!e2.key.empty(), ErrorCode::kBadPreload, "entry has no phonemes");
    std::optional<l1::L1Entry> e1;
    if (j.contains("l1")) {
      const auto& l = j.at("l1");
      const auto k = l.at("k").get<std::size_t>();
      const auto dim = l.at("dim").get<std::size_t>();
      const auto flat = l.at("centroids").get<std::vector<float>>();
      SC_CHECK(k >= 1 && dim >= 1 && flat.size() == k * dim, ErrorCode::kBadPreload,
               "centroid block does not match k x dim");
      e1.emplace();
      e1->centroids.centroids = Eigen::Map<const RowMatrix<float>>(
          flat.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
      e1->key = l.at("key").get<SymbolSequence>();
      SC_CHECK(!e1->key.empty(), ErrorCode::kBadPreload, "empty L1 key");
      for (std::size_t i = 0; i < e1->key.size(); ++i) {
        SC_CHECK(e1->key[i] >= 0 && static_cast<std::size_t>(e1->key[i]) < k,
                 ErrorCode::kBadPreload, "L1 key symbol outside K");
        SC_CHECK(i == 0 || e1->key[i] != e1->key[i - 1], ErrorCode::kBadPreload,
                 "L1 key is not collapsed");
      }
      e1->intent = e2.intent;
      e1->transcript_id = e2.transcript_id;
    }
    return {std::move(e1), std::move(e2)};
  }

  DeviceConfig cfg_;
  std::shared_ptr<const dsp::FrontendModel> frontend_;
  mutable std::mutex model_mutex_;
  std::array<PhonemeModelPtr, kBuckets> models_;
  CacheStore store_;
};

// One preload line for a record (inverse of the warm-up parser).
inline std::string preload_line(const CacheRecord& r) {
  nlohmann::ordered_json j;
  j["intent"] = r.intent;
  j["transcript_id"] = r.l2.transcript_id;
  std::string ph;
  for (Symbol s : r.l2.transport.empty() ? r.l2.key : r.l2.transport) {
    if (!ph.empty()) ph += ' ';
    ph += s == l2::kBlank ? std::string("|") : std::string(l2::symbol_name(s));
  }
  j["phonemes"] = ph;
  if (r.l1) {
    const auto& c = r.l1->centroids.centroids;
    j["l1"] = {{"k", c.rows()},
               {"dim", c.cols()},
               {"centroids", std::vector<float>(c.data(), c.data() + c.size())},
               {"key", r.l1->key}};
  }
  return j.dump();
}

}  // namespace speechcache::cache

#endif  // SPEECHCACHE_CACHE_MANAGER_HPP_
