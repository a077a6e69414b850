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

#ifndef SPEECHCACHE_HARNESS_MANIFEST_HPP_
#define SPEECHCACHE_HARNESS_MANIFEST_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechcache/dsp/waveform.hpp"
#include "speechcache/error.hpp"
#include "speechcache/types.hpp"

namespace speechcache::harness {

struct ManifestRecord {
  std::string utterance_id;
  std::string audio;  // path, relative to the manifest's directory
  std::string speaker_id;
  std::string transcript;
  std::string intent;
  std::string condition = "close";
  double duration_s = 0.0;
};

inline void to_json(nlohmann::ordered_json& j, const ManifestRecord& r) {
  j = nlohmann::ordered_json{{"utterance_id", r.utterance_id}, {"audio", r.audio},
                             {"speaker_id", r.speaker_id},     {"transcript", r.transcript},
                             {"intent", r.intent},             {"condition", r.condition},
                             {"duration_s", r.duration_s}};
}

// JSON-lines utterance table. Intents get dense IDs in sorted label order.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestRecord> records) : records_(std::move(records)) {
    reindex();
  }

  const std::vector<ManifestRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const ManifestRecord& operator[](std::size_t i) const { return records_[i]; }

  const ManifestRecord& at(const std::string& utterance_id) const {
    const auto it = index_.find(utterance_id);
    SC_CHECK(it != index_.end(), ErrorCode::kNotInManifest,
             "utterance '" + utterance_id + "' is not in the manifest");
    return records_[it->second];
  }
  bool contains(const std::string& utterance_id) const { return index_.count(utterance_id) > 0; }

  IntentId intent_id(const std::string& label) const {
    const auto it = intents_.find(label);
    SC_CHECK(it != intents_.end(), ErrorCode::kNotInManifest, "unknown intent '" + label + "'");
    return it->second;
  }
  std::size_t intent_count() const { return intents_.size(); }
  const std::map<std::string, IntentId>& intents() const { return intents_; }

  static Manifest parse(std::istream& in) {
    std::vector<ManifestRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = "manifest line " + std::to_string(lineno);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kFormat, where + ": " + e.what());
      }
      try {
        ManifestRecord r;
        r.utterance_id = j.at("utterance_id").get<std::string>();
        r.audio = j.at("audio").get<std::string>();
        r.speaker_id = j.at("speaker_id").get<std::string>();
        r.transcript = j.at("transcript").get<std::string>();
        r.intent = j.at("intent").get<std::string>();
        r.condition = j.value("condition", std::string("close"));
        r.duration_s = j.at("duration_s").get<double>();
        records.push_back(std::move(r));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kFormat, where + ": " + e.what());
      }
    }
    return Manifest(std::move(records));
  }

  static Manifest load(const std::string& path) {
    std::ifstream in(path);
    SC_CHECK(in.good(), ErrorCode::kIo, "cannot open manifest " + path);
    auto m = parse(in);
    m.base_dir_ = std::filesystem::path(path).parent_path().string();
    return m;
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
      nlohmann::ordered_json j = r;
      out += j.dump();
      out += '\n';
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    SC_CHECK(out.good(), ErrorCode::kIo, "cannot write manifest " + path);
    out << to_jsonl();
  }

  std::string audio_path(const ManifestRecord& r) const {
    if (base_dir_.empty() || std::filesystem::path(r.audio).is_absolute()) return r.audio;
    return (std::filesystem::path(base_dir_) / r.audio).string();
  }

 private:
  void reindex() {
    index_.clear();
    intents_.clear();
    std::set<std::string> labels;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      SC_CHECK(!r.utterance_id.empty(), ErrorCode::kFormat, "record without utterance_id");
      SC_CHECK(index_.emplace(r.utterance_id, i).second, ErrorCode::kFormat,
               "duplicate utterance_id '" + r.utterance_id + "'");
      SC_CHECK(r.duration_s > 0.0, ErrorCode::kFormat,
               "utterance '" + r.utterance_id + "' has non-positive duration");
      labels.insert(r.intent);
    }
    IntentId next = 0;
    for (const auto& l : labels) intents_[l] = next++;
  }

  std::vector<ManifestRecord> records_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, IntentId> intents_;
  std::string base_dir_;
};

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_MANIFEST_HPP_
