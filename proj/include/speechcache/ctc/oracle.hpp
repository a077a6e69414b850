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

#ifndef SPEECHCACHE_CTC_ORACLE_HPP_
#define SPEECHCACHE_CTC_ORACLE_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "speechcache/ctc/ctc.hpp"
#include "speechcache/error.hpp"

namespace speechcache::ctc {

inline constexpr double kOracleMaxPaths = 1e7;

// Exact p(target | posts) by enumerating all V^T paths. Test-only oracle.
inline double brute_force_ctc(const PosteriorSequence& posts, std::span<const Symbol> target,
                              CollapseMode mode) {
  check_mode(mode, posts.blank);
  const std::size_t T = posts.frames();
  const std::size_t V = posts.symbols();
  SC_CHECK(std::pow(static_cast<double>(V), static_cast<double>(T)) <= kOracleMaxPaths,
           ErrorCode::kOracleTooLarge, "enumeration would exceed 1e7 paths");
  const SymbolSequence want(target.begin(), target.end());
  std::vector<Symbol> path(T, 0);
  double total = 0.0;
  while (true) {
    if (collapse(path, mode, posts.blank) == want) {
      double p = 1.0;
      for (std::size_t t = 0; t < T; ++t) {
        p *= std::exp(posts.log_probs(static_cast<Eigen::Index>(t), path[t]));
      }
      total += p;
    }
    std::size_t i = 0;
    while (i < T && ++path[i] == static_cast<Symbol>(V)) path[i++] = 0;
    if (i == T) break;
  }
  return total;
}

}  // namespace speechcache::ctc

#endif  // SPEECHCACHE_CTC_ORACLE_HPP_
