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

#ifndef SPEECHCACHE_L2_L2_CACHE_HPP_
#define SPEECHCACHE_L2_L2_CACHE_HPP_

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
#include "speechcache/l2/phonemes.hpp"
#include "speechcache/tensor/gru.hpp"
#include "speechcache/types.hpp"

namespace speechcache::l2 {

using PhonemeModel = ad::GruStack<float>;

struct L2Entry {
  SymbolSequence key;        // CTC target: phonemes only
  SymbolSequence transport;  // with word-boundary blanks, for display
  IntentId intent = 0;
  std::string transcript_id;
  std::uint64_t created_at = 0;
  std::uint64_t last_hit = 0;

  std::size_t byte_size() const;
};

inline std::string describe(std::span<const Symbol> seq) {
  std::string out;
  for (Symbol s : seq) {
    if (!out.empty()) out += ' ';
    out += s == kBlank ? std::string("|") : std::string(symbol_name(s));
  }
  return out;
}

// T x 42 log-posteriors from the phoneme model (no graph recorded).
inline ctc::PosteriorSequence phoneme_posteriors(const RowMatrix<float>& features,
                                                 const PhonemeModel& model) {
  SC_CHECK(model.config().outputs == kAlphabetSize, ErrorCode::kShapeError,
           "phoneme model must emit 42 classes");
  ad::NoGradGuard no_grad;
  const auto y = model.forward(features);
  ctc::PosteriorSequence p;
  p.blank = kBlank;
  p.log_probs = y.matrix().cast<double>();
  return p;
}

// Length-normalized StandardCtc loss; +inf when the key cannot fit.
inline double entry_loss(const ctc::PosteriorSequence& posts, const L2Entry& entry) {
  if (entry.key.empty() ||
      !ctc::is_feasible(posts.frames(), entry.key, ctc::CollapseMode::kStandardCtc)) {
    return std::numeric_limits<double>::infinity();
  }
  return ctc::normalized_loss(ctc::ctc_loss(posts, entry.key, ctc::CollapseMode::kStandardCtc),
                              entry.key.size());
}

struct L2MatchResult {
  std::optional<std::size_t> best;
  double loss = std::numeric_limits<double>::infinity();
  bool hit = false;
};

using ThresholdFn = std::function<double(std::size_t key_length)>;

inline L2MatchResult match(const ctc::PosteriorSequence& posts,
                           std::span<const L2Entry* const> entries, const ThresholdFn& threshold) {
  L2MatchResult r;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double loss = entry_loss(posts, *entries[i]);
    if (loss < r.loss) {
      r.loss = loss;
      r.best = i;
    }
  }
  if (r.best) r.hit = r.loss <= threshold(entries[*r.best]->key.size());
  return r;
}

inline L2MatchResult match(const RowMatrix<float>& features, const PhonemeModel& model,
                           std::span<const L2Entry> entries, const ThresholdFn& threshold) {
  std::vector<const L2Entry*> ptrs;
  for (const auto& e : entries) ptrs.push_back(&e);
  if (ptrs.empty()) return {};
  return match(phoneme_posteriors(features, model), std::span<const L2Entry* const>(ptrs),
               threshold);
}

// Binary record: "SCL2", key u8, transport u8, intent u32, timestamps u64,
// transcript id.
inline void write_entry(ByteWriter& w, const L2Entry& e) {
  w.put_bytes("SCL2", 4);
  w.put(static_cast<std::uint16_t>(e.key.size()));
  for (Symbol s : e.key) w.put(static_cast<std::uint8_t>(s));
  w.put(static_cast<std::uint16_t>(e.transport.size()));
  for (Symbol s : e.transport) w.put(static_cast<std::uint8_t>(s));
  w.put(static_cast<std::uint32_t>(e.intent));
  w.put(e.created_at);
  w.put(e.last_hit);
  w.put_string(e.transcript_id);
}

inline L2Entry read_entry(ByteReader& r) {
  r.expect_magic("SCL2");
  L2Entry e;
  auto read_seq = [&r](SymbolSequence& seq, bool allow_blank) {
    seq.resize(r.get<std::uint16_t>());
    for (auto& s : seq) {
      s = r.get<std::uint8_t>();
      SC_CHECK(static_cast<std::size_t>(s) < kAlphabetSize && (allow_blank || s != kBlank),
               ErrorCode::kFormat, "phoneme ID out of range");
    }
  };
  read_seq(e.key, false);
  SC_CHECK(!e.key.empty(), ErrorCode::kFormat, "empty L2 key");
  read_seq(e.transport, true);
  e.intent = r.get<std::uint32_t>();
  e.created_at = r.get<std::uint64_t>();
  e.last_hit = r.get<std::uint64_t>();
  e.transcript_id = r.get_string();
  return e;
}

inline std::size_t L2Entry::byte_size() const {
  ByteWriter w;
  write_entry(w, *this);
  return w.bytes().size();
}

}  // namespace speechcache::l2

#endif  // SPEECHCACHE_L2_L2_CACHE_HPP_
