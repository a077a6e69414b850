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

#ifndef SPEECHCACHE_L1_L1_CACHE_HPP_
#define SPEECHCACHE_L1_L1_CACHE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "speechcache/bytes.hpp"
#include "speechcache/ctc/ctc.hpp"
#include "speechcache/error.hpp"
#include "speechcache/l1/kmeans.hpp"
#include "speechcache/types.hpp"

namespace speechcache::l1 {

// How per-frame centroid distances become a distribution.
enum class Distribution {
  kSoftmax,            // softmax(-d / (temperature * median(d)))
  kInverseNormalized,  // (max(d) - d) / sum(max(d) - d)
};

struct L1Config {
  KMeansConfig kmeans;
  Distribution distribution = Distribution::kSoftmax;
  double temperature = 0.03;
};

struct CentroidSet {
  RowMatrix<float> centroids;  // K x dim
  std::string utterance_id;

  std::size_t size() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids.cols()); }
};

struct L1Entry {
  CentroidSet centroids;
  SymbolSequence key;  // collapsed centroid IDs
  IntentId intent = 0;
  std::string transcript_id;
  std::uint64_t created_at = 0;
  std::uint64_t last_hit = 0;

  std::size_t byte_size() const;
};

struct Discretization {
  CentroidSet set;
  SymbolSequence ids;  // per frame, uncollapsed
  KMeansResult stats;
};

// Per-utterance k-means. `fit_extra` rows (e.g. augmented copies of the same
// utterance) join the fit but do not contribute IDs.
inline Discretization discretize(const RowMatrix<float>& features, const KMeansConfig& cfg,
                                 std::uint64_t seed, const RowMatrix<float>* fit_extra = nullptr,
                                 std::string utterance_id = {}) {
  SC_CHECK(features.rows() > 0, ErrorCode::kShapeError, "no frames to discretize");
  Discretization out;
  if (fit_extra && fit_extra->rows() > 0) {
    SC_CHECK(fit_extra->cols() == features.cols(), ErrorCode::kShapeError,
             "extra fit rows have the wrong dimension");
    RowMatrix<float> all(features.rows() + fit_extra->rows(), features.cols());
    all << features, *fit_extra;
    KMeansConfig c = cfg;
    // Keep the alphabet tied to the utterance itself, not its copies.
    c.k = std::min<std::size_t>(cfg.k, static_cast<std::size_t>(features.rows()));
    out.stats = kmeans(all, c, seed);
    out.stats.clamped = cfg.k > c.k;
  } else {
    out.stats = kmeans(features, cfg, seed);
  }
  out.set.centroids = out.stats.centroids;
  out.set.utterance_id = std::move(utterance_id);
  out.ids = assign_nearest(features, out.set.centroids);
  return out;
}

inline L1Entry build_entry(const RowMatrix<float>& features, IntentId intent,
                           std::string transcript_id, const L1Config& cfg, std::uint64_t seed,
                           const RowMatrix<float>* fit_extra = nullptr,
                           std::string utterance_id = {}) {
  auto d = discretize(features, cfg.kmeans, seed, fit_extra, std::move(utterance_id));
  L1Entry e;
  e.centroids = std::move(d.set);
  e.key = ctc::collapse(d.ids, ctc::CollapseMode::kRepeatMerge);
  e.intent = intent;
  e.transcript_id = std::move(transcript_id);
  return e;
}

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2)));
}

// T x K log-distributions over an entry's centroids.
inline ctc::PosteriorSequence frame_distributions(const RowMatrix<float>& features,
                                                  const CentroidSet& set, const L1Config& cfg) {
  SC_CHECK(features.cols() == set.centroids.cols(), ErrorCode::kShapeError,
           "feature dim does not match centroid dim");
  const auto T = features.rows();
  const auto K = set.centroids.rows();
  const auto dim = static_cast<std::size_t>(features.cols());
  ctc::PosteriorSequence p;
  p.log_probs.resize(T, K);
  std::vector<double> d(static_cast<std::size_t>(K));
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < K; ++j) {
      d[static_cast<std::size_t>(j)] =
          std::sqrt(squared_distance(features.row(t).data(), set.centroids.row(j).data(), dim));
    }
    auto row = p.log_probs.row(t);
    if (cfg.distribution == Distribution::kSoftmax) {
      double scale = median_of(d) * cfg.temperature;
      if (!(scale > 0.0)) scale = 1.0;
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < K; ++j) {
        row(j) = -d[static_cast<std::size_t>(j)] / scale;
        mx = std::max(mx, row(j));
      }
      double acc = 0.0;
      for (Eigen::Index j = 0; j < K; ++j) acc += std::exp(row(j) - mx);
      row.array() -= mx + std::log(acc);
    } else {
      const double mx = *std::max_element(d.begin(), d.end());
      double total = 0.0;
      for (double v : d) total += mx - v;
      for (Eigen::Index j = 0; j < K; ++j) {
        const double inv = mx - d[static_cast<std::size_t>(j)];
        if (total > 0.0) {
          row(j) = inv > 0.0 ? std::log(inv / total) : ctc::kLogZero;
        } else {
          row(j) = -std::log(static_cast<double>(K));
        }
      }
    }
  }
  return p;
}

// Length-normalized RepeatMerge CTC loss of `features` against one entry;
// +inf when the key cannot be aligned to this many frames.
inline double entry_loss(const RowMatrix<float>& features, const L1Entry& entry,
                         const L1Config& cfg) {
  if (entry.key.empty() ||
      !ctc::is_feasible(static_cast<std::size_t>(features.rows()), entry.key,
                        ctc::CollapseMode::kRepeatMerge)) {
    return std::numeric_limits<double>::infinity();
  }
  const auto posts = frame_distributions(features, entry.centroids, cfg);
  const double loss = ctc::ctc_loss(posts, entry.key, ctc::CollapseMode::kRepeatMerge);
  return ctc::normalized_loss(loss, entry.key.size());
}

struct L1MatchResult {
  std::optional<std::size_t> best;  // index into the searched entries
  double loss = std::numeric_limits<double>::infinity();
  bool hit = false;
};

using ThresholdFn = std::function<double(std::size_t key_length)>;

// Lowest-loss entry; the first one wins exact ties.
inline L1MatchResult match(const RowMatrix<float>& features,
                           std::span<const L1Entry* const> entries, const ThresholdFn& threshold,
                           const L1Config& cfg) {
  L1MatchResult r;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double loss = entry_loss(features, *entries[i], cfg);
    if (loss < r.loss) {
      r.loss = loss;
      r.best = i;
    }
  }
  if (r.best) r.hit = r.loss <= threshold(entries[*r.best]->key.size());
  return r;
}

inline L1MatchResult match(const RowMatrix<float>& features, std::span<const L1Entry> entries,
                           const ThresholdFn& threshold, const L1Config& cfg) {
  std::vector<const L1Entry*> ptrs;
  for (const auto& e : entries) ptrs.push_back(&e);
  return match(features, std::span<const L1Entry* const>(ptrs), threshold, cfg);
}

// Binary record: "SCL1", K, dim, centroids f32, U, key u16, intent u32,
// timestamps u64, transcript and utterance ids.
inline void write_entry(ByteWriter& w, const L1Entry& e) {
  w.put_bytes("SCL1", 4);
  w.put(static_cast<std::uint32_t>(e.centroids.size()));
  w.put(static_cast<std::uint32_t>(e.centroids.dim()));
  w.put_bytes(e.centroids.centroids.data(), sizeof(float) * e.centroids.centroids.size());
  w.put(static_cast<std::uint32_t>(e.key.size()));
  for (Symbol s : e.key) w.put(static_cast<std::uint16_t>(s));
  w.put(static_cast<std::uint32_t>(e.intent));
  w.put(e.created_at);
  w.put(e.last_hit);
  w.put_string(e.transcript_id);
  w.put_string(e.centroids.utterance_id);
}

inline L1Entry read_entry(ByteReader& r) {
  r.expect_magic("SCL1");
  L1Entry e;
  const auto k = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  SC_CHECK(k >= 1 && k <= 65535 && dim >= 1 && dim <= 4096, ErrorCode::kFormat,
           "implausible centroid block");
  e.centroids.centroids.resize(k, dim);
  r.get_bytes(e.centroids.centroids.data(), sizeof(float) * k * dim);
  const auto u = r.get<std::uint32_t>();
  SC_CHECK(u <= r.remaining() / 2, ErrorCode::kFormat, "implausible key length");
  e.key.resize(u);
  for (auto& s : e.key) {
    s = r.get<std::uint16_t>();
    SC_CHECK(static_cast<std::uint32_t>(s) < k, ErrorCode::kFormat, "key symbol outside K");
  }
  e.intent = r.get<std::uint32_t>();
  e.created_at = r.get<std::uint64_t>();
  e.last_hit = r.get<std::uint64_t>();
  e.transcript_id = r.get_string();
  e.centroids.utterance_id = r.get_string();
  return e;
}

inline std::size_t L1Entry::byte_size() const {
  ByteWriter w;
  write_entry(w, *this);
  return w.bytes().size();
}

}  // namespace speechcache::l1

#endif  // SPEECHCACHE_L1_L1_CACHE_HPP_
