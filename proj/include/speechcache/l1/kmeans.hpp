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

#ifndef SPEECHCACHE_L1_KMEANS_HPP_
#define SPEECHCACHE_L1_KMEANS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/types.hpp"

namespace speechcache::l1 {

struct KMeansConfig {
  std::size_t k = 70;
  double tol = 1e-4;
  std::size_t max_iter = 300;
};

struct KMeansResult {
  RowMatrix<float> centroids;     // k x dim, pairwise distinct
  std::vector<Symbol> labels;     // nearest centroid per input row
  std::vector<double> inertia;    // after each assignment step
  std::size_t iterations = 0;
  std::size_t effective_k = 0;    // distinct centroids before perturbation
  bool clamped = false;           // k was reduced to the row count
};

inline double squared_distance(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

// Nearest centroid index per row (lowest index wins ties); optionally the
// squared distance to it.
inline std::vector<Symbol> assign_nearest(const RowMatrix<float>& x, const RowMatrix<float>& c,
                                          std::vector<double>* dist = nullptr) {
  SC_CHECK(x.cols() == c.cols(), ErrorCode::kShapeError, "centroid dimension mismatch");
  const auto dim = static_cast<std::size_t>(x.cols());
  std::vector<Symbol> out(static_cast<std::size_t>(x.rows()));
  if (dist) dist->assign(out.size(), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Symbol arg = 0;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = squared_distance(x.row(i).data(), c.row(j).data(), dim);
      if (d < best) {
        best = d;
        arg = static_cast<Symbol>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = arg;
    if (dist) (*dist)[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

namespace detail {

// k-means++ seeding: first centre uniform, the rest by D^2 sampling.
inline RowMatrix<float> seed_plus_plus(const RowMatrix<float>& x, std::size_t k,
                                       std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto dim = static_cast<std::size_t>(x.cols());
  RowMatrix<float> c(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  c.row(0) = x.row(static_cast<Eigen::Index>(first));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(x.row(static_cast<Eigen::Index>(i)).data(), c.row(0).data(), dim);
  }
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    c.row(static_cast<Eigen::Index>(j)) = x.row(static_cast<Eigen::Index>(chosen));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x.row(static_cast<Eigen::Index>(i)).data(),
                                               c.row(static_cast<Eigen::Index>(j)).data(), dim));
    }
  }
  return c;
}

// Nudges later copies of a repeated centroid off the original so the set
// stays pairwise distinct; the original keeps every assignment.
inline std::size_t separate_duplicates(RowMatrix<float>& c) {
  const auto k = c.rows();
  std::size_t distinct = 0;
  const float scale = std::max(1.0f, c.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < k; ++j) {
    bool dup = false;
    for (Eigen::Index i = 0; i < j && !dup; ++i) dup = c.row(i) == c.row(j);
    if (!dup) {
      ++distinct;
      continue;
    }
    for (int attempt = 1;; ++attempt) {
      c(j, j % c.cols()) += 1e-3f * scale * static_cast<float>(attempt + j);
      bool again = false;
      for (Eigen::Index i = 0; i < j && !again; ++i) again = c.row(i) == c.row(j);
      if (!again) break;
    }
  }
  return distinct;
}

}  // namespace detail

// Lloyd's algorithm from k-means++ seeds; stops when no centroid moves more
// than `tol` or after `max_iter` rounds. k is clamped to the row count.
inline KMeansResult kmeans(const RowMatrix<float>& x, const KMeansConfig& cfg,
                           std::uint64_t seed) {
  SC_CHECK(x.rows() > 0 && x.cols() > 0, ErrorCode::kShapeError, "k-means on empty data");
  SC_CHECK(cfg.k >= 1, ErrorCode::kConfig, "k-means needs k >= 1");
  SC_CHECK(x.allFinite(), ErrorCode::kNumeric, "k-means input has non-finite values");
  KMeansResult res;
  const auto n = static_cast<std::size_t>(x.rows());
  const auto dim = static_cast<std::size_t>(x.cols());
  std::size_t k = cfg.k;
  if (k > n) {
    k = n;
    res.clamped = true;
  }
  std::mt19937_64 rng(seed);
  RowMatrix<float> c = detail::seed_plus_plus(x, k, rng);
  std::vector<double> dist;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sums(
      static_cast<Eigen::Index>(k), x.cols());
  std::vector<std::size_t> counts(k);

  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    res.labels = assign_nearest(x, c, &dist);
    double inertia = 0.0;
    for (double d : dist) inertia += d;
    res.inertia.push_back(inertia);
    ++res.iterations;

    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(res.labels[i]);
      sums.row(static_cast<Eigen::Index>(j)) += x.row(static_cast<Eigen::Index>(i)).cast<double>();
      ++counts[j];
    }
    RowMatrix<float> next = c;
    std::vector<bool> taken(n, false);
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (counts[j] > 0) {
        next.row(jj) = (sums.row(jj) / static_cast<double>(counts[j])).cast<float>();
        continue;
      }
      // Empty cluster: move it onto the point worst served by its centroid.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
      }
      if (far == n) continue;
      taken[far] = true;
      next.row(jj) = x.row(static_cast<Eigen::Index>(far));
    }
    double moved = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      moved = std::max(moved, std::sqrt(squared_distance(next.row(static_cast<Eigen::Index>(j)).data(),
                                                         c.row(static_cast<Eigen::Index>(j)).data(), dim)));
    }
    c = std::move(next);
    if (moved < cfg.tol) break;
  }
  res.labels = assign_nearest(x, c);
  res.effective_k = detail::separate_duplicates(c);
  res.centroids = std::move(c);
  return res;
}

}  // namespace speechcache::l1

#endif  // SPEECHCACHE_L1_KMEANS_HPP_
