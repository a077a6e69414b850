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

#ifndef SPEECHCACHE_CLOUD_LEXICON_HPP_
#define SPEECHCACHE_CLOUD_LEXICON_HPP_

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/l2/phonemes.hpp"
#include "speechcache/types.hpp"

namespace speechcache::cloud {

// Word -> phoneme IDs (never the blank). Text form is CMUdict-like:
// one "WORD PH PH ..." line per word; '#' starts a comment.
class Lexicon {
 public:
  void add(const std::string& word, SymbolSequence phonemes) {
    SC_CHECK(!word.empty() && !phonemes.empty(), ErrorCode::kConfig, "empty lexicon entry");
    for (Symbol s : phonemes) {
      SC_CHECK(s > l2::kBlank && static_cast<std::size_t>(s) < l2::kAlphabetSize,
               ErrorCode::kConfig, "lexicon entry for '" + word + "' has a bad phoneme");
    }
    words_[lower(word)] = std::move(phonemes);
  }

  const SymbolSequence* find(const std::string& word) const {
    const auto it = words_.find(lower(word));
    return it == words_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return words_.size(); }
  const std::map<std::string, SymbolSequence>& words() const { return words_; }

  static Lexicon parse(std::istream& in) {
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ss(line);
      std::string word, ph;
      if (!(ss >> word)) continue;
      SymbolSequence seq;
      while (ss >> ph) {
        const auto id = l2::symbol_id(ph);
        SC_CHECK(id && *id != l2::kBlank, ErrorCode::kConfig,
                 "lexicon line " + std::to_string(lineno) + ": unknown phoneme '" + ph + "'");
        seq.push_back(*id);
      }
      lex.add(word, std::move(seq));
    }
    return lex;
  }

  static Lexicon load(const std::string& path) {
    std::ifstream in(path);
    SC_CHECK(in.good(), ErrorCode::kIo, "cannot open lexicon " + path);
    return parse(in);
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [w, seq] : words_) {
      out += w;
      for (Symbol s : seq) {
        out += ' ';
        out += l2::symbol_name(s);
      }
      out += '\n';
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    SC_CHECK(out.good(), ErrorCode::kIo, "cannot write lexicon " + path);
    out << to_text();
  }

 private:
  static std::string lower(std::string s) {
    for (auto& c : s) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
  }

  std::map<std::string, SymbolSequence> words_;
};

struct Tokenized {
  SymbolSequence transport;  // word phonemes separated by single blanks
  SymbolSequence target;     // blanks stripped: the CTC reference
};

inline std::vector<std::string> split_words(const std::string& transcript) {
  std::vector<std::string> out;
  std::istringstream ss(transcript);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

inline Tokenized tokenize(const std::string& transcript, const Lexicon& lexicon) {
  const auto words = split_words(transcript);
  SC_CHECK(!words.empty(), ErrorCode::kLexiconMiss, "empty transcript");
  Tokenized t;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto* ph = lexicon.find(words[i]);
    SC_CHECK(ph != nullptr, ErrorCode::kLexiconMiss, "word '" + words[i] + "' not in lexicon");
    if (i > 0) t.transport.push_back(l2::kBlank);
    t.transport.insert(t.transport.end(), ph->begin(), ph->end());
    t.target.insert(t.target.end(), ph->begin(), ph->end());
  }
  return t;
}

}  // namespace speechcache::cloud

#endif  // SPEECHCACHE_CLOUD_LEXICON_HPP_
