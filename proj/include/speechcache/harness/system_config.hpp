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

#ifndef SPEECHCACHE_HARNESS_SYSTEM_CONFIG_HPP_
#define SPEECHCACHE_HARNESS_SYSTEM_CONFIG_HPP_

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "speechcache/cache/manager.hpp"
#include "speechcache/cloud/cloud.hpp"
#include "speechcache/error.hpp"
#include "speechcache/harness/latency.hpp"
#include "speechcache/tensor/gru.hpp"

namespace speechcache::harness {

// Everything a benchmark run depends on besides the corpus and setting.
struct SystemConfig {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::uint64_t frontend_seed = 7;
  std::uint64_t model_seed = 11;
  ad::GruStackConfig model;
  cache::DeviceConfig device;
  cloud::CloudConfig cloud;
  double pretrain_fraction = 0.0;  // in-domain pretraining ("T")
  bool threshold_mlp = false;      // per-level MLPs fitted after learning
  LatencyModel latency;

  SystemConfig() {
    // Training from a random extractor needs a larger step than finetuning
    // a pretrained one.
    cloud.finetune.adam.lr = 1e-3;
  }
};

inline nlohmann::ordered_json to_json(const SystemConfig& c) {
  const auto& t = c.device.thresholds;
  const auto& f = c.cloud.finetune;
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["frontend_seed"] = c.frontend_seed;
  j["model_seed"] = c.model_seed;
  j["hidden"] = c.model.hidden;
  j["layers"] = c.model.layers;
  j["capacity"] = c.device.store.capacity;
  j["per_intent_cap"] = c.device.store.per_intent_cap;
  j["bucket_b1"] = c.device.buckets.b1;
  j["bucket_b2"] = c.device.buckets.b2;
  j["bypass_l1"] = c.device.buckets.bypass_l1_bucket1;
  j["l1_k"] = c.device.l1.kmeans.k;
  j["l1_temperature"] = c.device.l1.temperature;
  j["l1_distribution"] =
      c.device.l1.distribution == l1::Distribution::kSoftmax ? "softmax" : "inverse";
  j["l1_threshold"] = t.l1;
  j["l2_threshold"] = t.l2;
  j["threshold_mlp"] = c.threshold_mlp;
  j["push_every"] = c.cloud.push_every;
  j["augment"] = c.cloud.augment_enabled;
  j["augment_versions"] = c.cloud.augment.versions;
  j["l1_fit_augmented"] = c.cloud.l1_fit_augmented;
  j["bucket_margin"] = c.cloud.bucket_margin;
  j["finetune"] = c.cloud.finetune_enabled;
  j["lr"] = f.adam.lr;
  j["batch"] = f.batch;
  j["max_epochs"] = f.max_epochs;
  j["min_improvement"] = f.min_improvement;
  j["patience"] = f.patience;
  j["pretrain_fraction"] = c.pretrain_fraction;
  j["l1_hit_ms"] = c.latency.l1_hit_ms;
  j["l2_hit_ms"] = c.latency.l2_hit_ms;
  j["rtf_mean"] = c.latency.rtf_mean;
  j["rtf_sd"] = c.latency.rtf_sd;
  j["power_mw"] = c.latency.active_power_mw;
  return j;
}

namespace detail {

// A scalar applies to every bucket; an array sets them individually.
inline void read_thresholds(const nlohmann::json& v, std::array<double, cache::kBuckets>& out) {
  if (v.is_array()) {
    SC_CHECK(v.size() == cache::kBuckets, ErrorCode::kConfig, "threshold array needs 3 values");
    for (std::size_t i = 0; i < cache::kBuckets; ++i) out[i] = v[i].get<double>();
  } else {
    out.fill(v.get<double>());
  }
  for (double x : out) SC_CHECK(x >= 0.0, ErrorCode::kConfig, "thresholds must be non-negative");
}

}  // namespace detail

// Applies the keys present in `j` on top of `c`. Unknown keys are errors.
inline void apply_config(SystemConfig& c, const nlohmann::json& j) {
  SC_CHECK(j.is_object(), ErrorCode::kConfig, "config must be a JSON object");
  const auto known = to_json(SystemConfig{});
  for (auto it = j.begin(); it != j.end(); ++it) {
    SC_CHECK(known.contains(it.key()), ErrorCode::kConfig, "unknown config key '" + it.key() + "'");
  }
  try {
    auto get = [&](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k).get<std::remove_reference_t<decltype(dst)>>();
    };
    get("seed", c.seed);
    get("workers", c.workers);
    get("frontend_seed", c.frontend_seed);
    get("model_seed", c.model_seed);
    get("hidden", c.model.hidden);
    get("layers", c.model.layers);
    get("capacity", c.device.store.capacity);
    get("per_intent_cap", c.device.store.per_intent_cap);
    get("bucket_b1", c.device.buckets.b1);
    get("bucket_b2", c.device.buckets.b2);
    get("bypass_l1", c.device.buckets.bypass_l1_bucket1);
    get("l1_k", c.device.l1.kmeans.k);
    get("l1_temperature", c.device.l1.temperature);
    if (j.contains("l1_distribution")) {
      const auto d = j.at("l1_distribution").get<std::string>();
      SC_CHECK(d == "softmax" || d == "inverse", ErrorCode::kConfig,
               "l1_distribution must be softmax or inverse");
      c.device.l1.distribution =
          d == "softmax" ? l1::Distribution::kSoftmax : l1::Distribution::kInverseNormalized;
    }
    if (j.contains("l1_threshold")) detail::read_thresholds(j.at("l1_threshold"), c.device.thresholds.l1);
    if (j.contains("l2_threshold")) detail::read_thresholds(j.at("l2_threshold"), c.device.thresholds.l2);
    get("threshold_mlp", c.threshold_mlp);
    get("push_every", c.cloud.push_every);
    get("augment", c.cloud.augment_enabled);
    get("augment_versions", c.cloud.augment.versions);
    get("l1_fit_augmented", c.cloud.l1_fit_augmented);
    get("bucket_margin", c.cloud.bucket_margin);
    get("finetune", c.cloud.finetune_enabled);
    get("lr", c.cloud.finetune.adam.lr);
    get("batch", c.cloud.finetune.batch);
    get("max_epochs", c.cloud.finetune.max_epochs);
    get("min_improvement", c.cloud.finetune.min_improvement);
    get("patience", c.cloud.finetune.patience);
    get("pretrain_fraction", c.pretrain_fraction);
    get("l1_hit_ms", c.latency.l1_hit_ms);
    get("l2_hit_ms", c.latency.l2_hit_ms);
    get("rtf_mean", c.latency.rtf_mean);
    get("rtf_sd", c.latency.rtf_sd);
    get("power_mw", c.latency.active_power_mw);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad config value: ") + e.what());
  }
  // The store and bucket layout share the device config.
  c.cloud.buckets = c.device.buckets;
  c.cloud.l1 = c.device.l1;
  SC_CHECK(c.workers >= 1, ErrorCode::kConfig, "workers must be at least 1");
  SC_CHECK(c.pretrain_fraction >= 0.0 && c.pretrain_fraction <= 1.0, ErrorCode::kConfig,
           "pretrain_fraction must be in [0, 1]");
}

inline SystemConfig load_system_config(const std::string& path) {
  std::ifstream in(path);
  SC_CHECK(in.good(), ErrorCode::kIo, "cannot open config " + path);
  SystemConfig c;
  try {
    apply_config(c, nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
  return c;
}

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_SYSTEM_CONFIG_HPP_
