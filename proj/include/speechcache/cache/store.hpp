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

#ifndef SPEECHCACHE_CACHE_STORE_HPP_
#define SPEECHCACHE_CACHE_STORE_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "speechcache/bytes.hpp"
#include "speechcache/error.hpp"
#include "speechcache/l1/l1_cache.hpp"
#include "speechcache/l2/l2_cache.hpp"
#include "speechcache/types.hpp"

namespace speechcache::cache {

struct StoreConfig {
  std::size_t capacity = 60;
  std::size_t per_intent_cap = 8;
};

// One cached utterance: its phoneme entry and, unless the utterance was
// short enough to bypass L1, its sound-unit entry.
struct CacheRecord {
  std::uint64_t id = 0;
  IntentId intent = 0;
  std::optional<l1::L1Entry> l1;
  l2::L2Entry l2;
  std::uint64_t created_at = 0;
  std::uint64_t last_hit = 0;  // logical clock; equals created_at until hit
};

// Bounded entry store with LRU eviction and a per-intent cap. The clock is
// logical: every install and touch advances it by one.
class CacheStore {
 public:
  explicit CacheStore(StoreConfig cfg = {}) : cfg_(cfg) {
    SC_CHECK(cfg_.capacity >= 1 && cfg_.per_intent_cap >= 1, ErrorCode::kConfig,
             "store capacity and per-intent cap must be positive");
  }

  const StoreConfig& config() const { return cfg_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::uint64_t clock() const { return clock_; }

  std::size_t count_for(IntentId intent) const {
    const auto it = per_intent_.find(intent);
    return it == per_intent_.end() ? 0 : it->second;
  }

  // Inserts a record; returns the IDs evicted to make room (cap first, then
  // capacity).
  std::vector<std::uint64_t> install(std::optional<l1::L1Entry> l1, l2::L2Entry l2) {
    SC_CHECK(!l2.key.empty(), ErrorCode::kConfig, "L2 entry needs a key");
    SC_CHECK(!l1 || l1->intent == l2.intent, ErrorCode::kConfig,
             "L1 and L2 entries disagree on the intent");
    std::vector<std::uint64_t> evicted;
    const IntentId intent = l2.intent;
    if (count_for(intent) >= cfg_.per_intent_cap) evicted.push_back(evict_lru(intent));
    if (records_.size() >= cfg_.capacity) evicted.push_back(evict_lru(std::nullopt));
    CacheRecord rec;
    rec.id = next_id_++;
    rec.intent = intent;
    rec.created_at = rec.last_hit = ++clock_;
    l2.created_at = l2.last_hit = rec.created_at;
    if (l1) l1->created_at = l1->last_hit = rec.created_at;
    rec.l1 = std::move(l1);
    rec.l2 = std::move(l2);
    ++per_intent_[intent];
    records_.push_back(std::move(rec));
    return evicted;
  }

  // Marks a hit: recency is the only thing that changes.
  void touch(std::uint64_t id) {
    auto* r = find_mut(id);
    SC_CHECK(r != nullptr, ErrorCode::kConfig, "touch of unknown record");
    r->last_hit = ++clock_;
    r->l2.last_hit = r->last_hit;
    if (r->l1) r->l1->last_hit = r->last_hit;
  }

  const CacheRecord* find(std::uint64_t id) const {
    for (const auto& r : records_) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }

  // Records in insertion order.
  const std::vector<CacheRecord>& records() const { return records_; }

  // IDs from least to most recently used.
  std::vector<std::uint64_t> lru_order() const {
    std::vector<const CacheRecord*> v;
    for (const auto& r : records_) v.push_back(&r);
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return less_recent(*a, *b); });
    std::vector<std::uint64_t> out;
    for (auto* r : v) out.push_back(r->id);
    return out;
  }

  // Hash of cached content (keys, centroids, intents, ids), excluding recency.
  std::uint64_t content_hash() const {
    Fnv1a h;
    for (const auto& r : records_) {
      h.update_value(r.id);
      h.update_value(r.intent);
      h.update_value(r.created_at);
      for (Symbol s : r.l2.key) h.update_value(s);
      h.update(r.l2.transcript_id.data(), r.l2.transcript_id.size());
      h.update_value(static_cast<std::uint8_t>(r.l1.has_value()));
      if (r.l1) {
        for (Symbol s : r.l1->key) h.update_value(s);
        const auto& c = r.l1->centroids.centroids;
        h.update(c.data(), sizeof(float) * static_cast<std::size_t>(c.size()));
      }
    }
    return h.digest();
  }

  // Throws kConfig naming the first broken invariant.
  void check_invariants() const {
    SC_CHECK(records_.size() <= cfg_.capacity, ErrorCode::kConfig, "store over capacity");
    std::map<IntentId, std::size_t> counts;
    for (const auto& r : records_) {
      ++counts[r.intent];
      SC_CHECK(r.last_hit >= r.created_at && r.last_hit <= clock_, ErrorCode::kConfig,
               "record timestamps out of order");
      SC_CHECK(r.l2.intent == r.intent && (!r.l1 || r.l1->intent == r.intent), ErrorCode::kConfig,
               "record entries disagree on the intent");
    }
    for (const auto& [intent, n] : counts) {
      SC_CHECK(n <= cfg_.per_intent_cap, ErrorCode::kConfig, "per-intent cap exceeded");
      SC_CHECK(count_for(intent) == n, ErrorCode::kConfig, "per-intent counter drifted");
    }
    SC_CHECK(counts.size() == per_intent_.size(), ErrorCode::kConfig, "stale per-intent counter");
  }

  std::vector<char> serialize() const {
    ByteWriter w;
    w.put_bytes("SCST", 4);
    w.put(static_cast<std::uint32_t>(1));
    w.put(static_cast<std::uint64_t>(cfg_.capacity));
    w.put(static_cast<std::uint64_t>(cfg_.per_intent_cap));
    w.put(clock_);
    w.put(next_id_);
    w.put(static_cast<std::uint32_t>(records_.size()));
    for (const auto& r : records_) {
      w.put(r.id);
      w.put(static_cast<std::uint32_t>(r.intent));
      w.put(r.created_at);
      w.put(r.last_hit);
      w.put(static_cast<std::uint8_t>(r.l1.has_value()));
      if (r.l1) l1::write_entry(w, *r.l1);
      l2::write_entry(w, r.l2);
    }
    return w.take();
  }

  static CacheStore deserialize(const std::vector<char>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("SCST");
    SC_CHECK(r.get<std::uint32_t>() == 1, ErrorCode::kFormat, "unsupported store version");
    StoreConfig cfg;
    cfg.capacity = r.get<std::uint64_t>();
    cfg.per_intent_cap = r.get<std::uint64_t>();
    CacheStore s(cfg);
    s.clock_ = r.get<std::uint64_t>();
    s.next_id_ = r.get<std::uint64_t>();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      CacheRecord rec;
      rec.id = r.get<std::uint64_t>();
      rec.intent = r.get<std::uint32_t>();
      rec.created_at = r.get<std::uint64_t>();
      rec.last_hit = r.get<std::uint64_t>();
      if (r.get<std::uint8_t>()) rec.l1 = l1::read_entry(r);
      rec.l2 = l2::read_entry(r);
      ++s.per_intent_[rec.intent];
      s.records_.push_back(std::move(rec));
    }
    SC_CHECK(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes in store snapshot");
    s.check_invariants();
    return s;
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    SC_CHECK(out.good(), ErrorCode::kIo, "cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static CacheStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SC_CHECK(in.good(), ErrorCode::kIo, "cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  static bool less_recent(const CacheRecord& a, const CacheRecord& b) {
    return a.last_hit != b.last_hit ? a.last_hit < b.last_hit : a.id < b.id;
  }

  CacheRecord* find_mut(std::uint64_t id) {
    for (auto& r : records_) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }

  std::uint64_t evict_lru(std::optional<IntentId> intent) {
    auto victim = records_.end();
    for (auto it = records_.begin(); it != records_.end(); ++it) {
      if (intent && it->intent != *intent) continue;
      if (victim == records_.end() || less_recent(*it, *victim)) victim = it;
    }
    SC_CHECK(victim != records_.end(), ErrorCode::kConfig, "nothing to evict");
    const std::uint64_t id = victim->id;
    if (--per_intent_[victim->intent] == 0) per_intent_.erase(victim->intent);
    records_.erase(victim);
    return id;
  }

  StoreConfig cfg_;
  std::vector<CacheRecord> records_;
  std::map<IntentId, std::size_t> per_intent_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_id_ = 1;
};

}  // namespace speechcache::cache

#endif  // SPEECHCACHE_CACHE_STORE_HPP_
