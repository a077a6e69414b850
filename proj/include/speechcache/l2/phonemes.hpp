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

#ifndef SPEECHCACHE_L2_PHONEMES_HPP_
#define SPEECHCACHE_L2_PHONEMES_HPP_

#include <array>
#include <optional>
#include <string_view>

#include "speechcache/types.hpp"

namespace speechcache::l2 {

// 41 context-independent phonemes (ARPAbet 39 plus AX, DX) behind the blank.
inline constexpr std::size_t kPhonemeCount = 41;
inline constexpr std::size_t kAlphabetSize = kPhonemeCount + 1;
inline constexpr Symbol kBlank = 0;
inline constexpr std::string_view kBlankName = "sp";

inline constexpr std::array<std::string_view, kAlphabetSize> kSymbols = {
    "sp", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY",
    "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY", "P",
    "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH", "AX", "DX"};

inline std::string_view symbol_name(Symbol s) {
  return s >= 0 && static_cast<std::size_t>(s) < kAlphabetSize ? kSymbols[static_cast<std::size_t>(s)]
                                                               : std::string_view("?");
}

// Accepts plain or stress-marked ARPAbet ("AH0", "ey1"); nullopt if unknown.
inline std::optional<Symbol> symbol_id(std::string_view name) {
  while (!name.empty() && name.back() >= '0' && name.back() <= '9') name.remove_suffix(1);
  for (std::size_t i = 0; i < kAlphabetSize; ++i) {
    const auto s = kSymbols[i];
    if (s.size() != name.size()) continue;
    bool eq = true;
    for (std::size_t j = 0; j < s.size() && eq; ++j) {
      char c = name[j];
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
      eq = (i == 0 ? s[j] == name[j] : s[j] == c);
    }
    if (eq) return static_cast<Symbol>(i);
  }
  return std::nullopt;
}

}  // namespace speechcache::l2

#endif  // SPEECHCACHE_L2_PHONEMES_HPP_
