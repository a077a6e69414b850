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

#ifndef SPEECHCACHE_CTC_CTC_HPP_
#define SPEECHCACHE_CTC_CTC_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/types.hpp"

namespace speechcache::ctc {

// RepeatMerge: paths collapse by merging adjacent duplicates only (no blank).
// StandardCtc: merge adjacent duplicates, then delete blanks.
enum class CollapseMode { kRepeatMerge, kStandardCtc };

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

// Per-frame distributions over a V-symbol alphabet, stored as
// log-probabilities (T x V).
struct PosteriorSequence {
  RowMatrix<double> log_probs;
  std::optional<Symbol> blank;

  std::size_t frames() const { return static_cast<std::size_t>(log_probs.rows()); }
  std::size_t symbols() const { return static_cast<std::size_t>(log_probs.cols()); }

  static PosteriorSequence from_log_probs(RowMatrix<double> log_probs,
                                          std::optional<Symbol> blank = std::nullopt,
                                          double tol = 1e-6) {
    PosteriorSequence p{std::move(log_probs), blank};
    p.validate(tol);
    return p;
  }

  static PosteriorSequence from_probs(const RowMatrix<double>& probs,
                                      std::optional<Symbol> blank = std::nullopt,
                                      double tol = 1e-6) {
    RowMatrix<double> lp(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      const double v = probs.data()[i];
      SC_CHECK(v >= 0.0, ErrorCode::kShapeError, "negative probability");
      lp.data()[i] = v > 0.0 ? std::log(v) : kLogZero;
    }
    return from_log_probs(std::move(lp), blank, tol);
  }

  void validate(double tol) const {
    SC_CHECK(log_probs.cols() > 0, ErrorCode::kShapeError, "empty alphabet");
    SC_CHECK(!blank || (*blank >= 0 && *blank < log_probs.cols()), ErrorCode::kShapeError,
             "blank index outside the alphabet");
    for (Eigen::Index t = 0; t < log_probs.rows(); ++t) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < log_probs.cols(); ++k) s += std::exp(log_probs(t, k));
      SC_CHECK(std::fabs(s - 1.0) <= tol, ErrorCode::kShapeError,
               "posterior row " + std::to_string(t) + " sums to " + std::to_string(s));
    }
  }
};

inline void check_mode(CollapseMode mode, std::optional<Symbol> blank) {
  if (mode == CollapseMode::kStandardCtc) {
    SC_CHECK(blank.has_value(), ErrorCode::kShapeError, "StandardCtc needs a blank symbol");
  } else {
    SC_CHECK(!blank.has_value(), ErrorCode::kShapeError, "RepeatMerge has no blank symbol");
  }
}

inline SymbolSequence collapse(std::span<const Symbol> raw, CollapseMode mode,
                               std::optional<Symbol> blank = std::nullopt) {
  check_mode(mode, blank);
  SymbolSequence out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i > 0 && raw[i] == raw[i - 1]) continue;
    if (mode == CollapseMode::kStandardCtc && raw[i] == *blank) continue;
    out.push_back(raw[i]);
  }
  return out;
}

inline std::size_t adjacent_repeats(std::span<const Symbol> target) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

// Whether some length-T path collapses to `target`.
inline bool is_feasible(std::size_t frames, std::span<const Symbol> target, CollapseMode mode) {
  if (target.empty()) return false;
  if (mode == CollapseMode::kRepeatMerge) {
    return adjacent_repeats(target) == 0 && target.size() <= frames;
  }
  return frames >= target.size() + adjacent_repeats(target);
}

namespace detail {

struct Lattice {
  std::vector<Symbol> states;  // label per lattice state
  RowMatrix<double> alpha;     // T x S, includes emission at t
  RowMatrix<double> beta;      // T x S, excludes emission at t
  double log_likelihood = kLogZero;
};

inline void check_instance(const PosteriorSequence& posts, std::span<const Symbol> target,
                           CollapseMode mode) {
  check_mode(mode, posts.blank);
  SC_CHECK(posts.frames() >= 1, ErrorCode::kShapeError, "posterior sequence has no frames");
  SC_CHECK(!target.empty(), ErrorCode::kShapeError, "empty target sequence");
  for (Symbol s : target) {
    SC_CHECK(s >= 0 && static_cast<std::size_t>(s) < posts.symbols(), ErrorCode::kShapeError,
             "target symbol " + std::to_string(s) + " outside the alphabet");
    SC_CHECK(!posts.blank || s != *posts.blank, ErrorCode::kShapeError,
             "target contains the blank symbol");
  }
  SC_CHECK(is_feasible(posts.frames(), target, mode), ErrorCode::kInfeasible,
           "no " + std::to_string(posts.frames()) + "-frame path collapses to a " +
               std::to_string(target.size()) + "-symbol target");
}

// Whether state s may be entered directly from state s - 2.
inline bool can_skip(const std::vector<Symbol>& states, std::size_t s,
                     std::optional<Symbol> blank) {
  return s >= 2 && states[s] != *blank && states[s] != states[s - 2];
}

inline Lattice forward_backward(const PosteriorSequence& posts, std::span<const Symbol> target,
                                CollapseMode mode, bool with_beta) {
  check_instance(posts, target, mode);
  const std::size_t T = posts.frames();
  const auto& y = posts.log_probs;
  Lattice lat;
  if (mode == CollapseMode::kStandardCtc) {
    lat.states.push_back(*posts.blank);
    for (Symbol s : target) {
      lat.states.push_back(s);
      lat.states.push_back(*posts.blank);
    }
  } else {
    lat.states.assign(target.begin(), target.end());
  }
  const std::size_t S = lat.states.size();
  const bool standard = mode == CollapseMode::kStandardCtc;
  lat.alpha.setConstant(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(S), kLogZero);
  auto emit = [&](std::size_t t, std::size_t s) {
    return y(static_cast<Eigen::Index>(t), lat.states[s]);
  };

  lat.alpha(0, 0) = emit(0, 0);
  if (standard && S > 1) lat.alpha(0, 1) = emit(0, 1);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = lat.alpha(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(s));
      if (s >= 1) acc = log_add(acc, lat.alpha(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(s - 1)));
      if (standard && can_skip(lat.states, s, posts.blank)) {
        acc = log_add(acc, lat.alpha(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(s - 2)));
      }
      lat.alpha(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) =
          acc == kLogZero ? kLogZero : acc + emit(t, s);
    }
  }
  const auto last = static_cast<Eigen::Index>(T - 1);
  lat.log_likelihood = lat.alpha(last, static_cast<Eigen::Index>(S - 1));
  if (standard && S > 1) {
    lat.log_likelihood = log_add(lat.log_likelihood, lat.alpha(last, static_cast<Eigen::Index>(S - 2)));
  }
  if (!with_beta) return lat;

  lat.beta.setConstant(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(S), kLogZero);
  lat.beta(last, static_cast<Eigen::Index>(S - 1)) = 0.0;
  if (standard && S > 1) lat.beta(last, static_cast<Eigen::Index>(S - 2)) = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    const auto tn = static_cast<Eigen::Index>(t + 1);
    for (std::size_t s = 0; s < S; ++s) {
      double acc = lat.beta(tn, static_cast<Eigen::Index>(s)) + emit(t + 1, s);
      if (s + 1 < S) {
        acc = log_add(acc, lat.beta(tn, static_cast<Eigen::Index>(s + 1)) + emit(t + 1, s + 1));
      }
      if (standard && s + 2 < S && can_skip(lat.states, s + 2, posts.blank)) {
        acc = log_add(acc, lat.beta(tn, static_cast<Eigen::Index>(s + 2)) + emit(t + 1, s + 2));
      }
      lat.beta(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) =
          std::isnan(acc) ? kLogZero : acc;
    }
  }
  return lat;
}

}  // namespace detail

// -log p(target | posts), summed over every length-T path collapsing to the
// target. +inf when the target is reachable only through zero-probability
// frames; throws Infeasible when no path of this length exists at all.
inline double ctc_loss(const PosteriorSequence& posts, std::span<const Symbol> target,
                       CollapseMode mode) {
  return -detail::forward_backward(posts, target, mode, false).log_likelihood;
}

// Loss per target symbol; the quantity thresholds are compared against.
inline double normalized_loss(double loss, std::size_t target_length) {
  return loss / static_cast<double>(target_length);
}

struct CtcGradient {
  double loss = 0.0;
  // d loss / d log_probs, with log_probs treated as free: -occupancy.
  RowMatrix<double> log_prob_grad;
  // Gradient w.r.t. pre-softmax scores whose log-softmax gave log_probs:
  // softmax(row) - occupancy.
  RowMatrix<double> logit_grad;
};

inline CtcGradient ctc_loss_grad(const PosteriorSequence& posts, std::span<const Symbol> target,
                                 CollapseMode mode) {
  const auto lat = detail::forward_backward(posts, target, mode, true);
  SC_CHECK(lat.log_likelihood != kLogZero, ErrorCode::kInfeasible,
           "target has zero probability under these posteriors");
  const auto T = static_cast<Eigen::Index>(posts.frames());
  const auto V = static_cast<Eigen::Index>(posts.symbols());
  CtcGradient out;
  out.loss = -lat.log_likelihood;
  RowMatrix<double> occupancy = RowMatrix<double>::Zero(T, V);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < lat.states.size(); ++s) {
      const double a = lat.alpha(t, static_cast<Eigen::Index>(s));
      const double b = lat.beta(t, static_cast<Eigen::Index>(s));
      if (a == kLogZero || b == kLogZero) continue;
      occupancy(t, lat.states[s]) += std::exp(a + b - lat.log_likelihood);
    }
  }
  out.log_prob_grad = -occupancy;
  out.logit_grad = posts.log_probs.array().exp().matrix() - occupancy;
  return out;
}

}  // namespace speechcache::ctc

#endif  // SPEECHCACHE_CTC_CTC_HPP_
