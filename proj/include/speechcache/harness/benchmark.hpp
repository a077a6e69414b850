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

#ifndef SPEECHCACHE_HARNESS_BENCHMARK_HPP_
#define SPEECHCACHE_HARNESS_BENCHMARK_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "speechcache/cache/manager.hpp"
#include "speechcache/cache/threshold_mlp.hpp"
#include "speechcache/cloud/cloud.hpp"
#include "speechcache/error.hpp"
#include "speechcache/harness/latency.hpp"
#include "speechcache/harness/manifest.hpp"
#include "speechcache/harness/ops.hpp"
#include "speechcache/harness/synth.hpp"
#include "speechcache/harness/system_config.hpp"

namespace speechcache::harness {

inline constexpr int kReportVersion = 1;

enum class SettingKind { kOneSpkAllSeen, kOneSpkKSeen, kNSpkAllSeen };

struct Setting {
  SettingKind kind = SettingKind::kOneSpkAllSeen;
  int k = 100;  // % of test inputs whose transcript is cached
  int n = 1;    // speakers sharing one device

  static Setting one_speaker_all_seen() { return {}; }
  static Setting one_speaker_k_seen(int k) {
    SC_CHECK(k >= 0 && k <= 100, ErrorCode::kConfig, "k must be in [0, 100]");
    return k == 100 ? Setting{} : Setting{SettingKind::kOneSpkKSeen, k, 1};
  }
  static Setting n_speakers_all_seen(int n) {
    SC_CHECK(n >= 1, ErrorCode::kConfig, "n must be at least 1");
    return n == 1 ? Setting{} : Setting{SettingKind::kNSpkAllSeen, 100, n};
  }

  std::string name() const {
    return std::to_string(n) + "spk-" + std::to_string(k) + "seen";
  }

  // "1spk-100seen", "1spk-70seen", "3spk-100seen".
  static Setting parse(const std::string& s) {
    static const std::regex re(R"((\d+)spk-(\d+)seen)");
    std::smatch m;
    SC_CHECK(std::regex_match(s, m, re), ErrorCode::kConfig,
             "setting must look like <n>spk-<k>seen, got '" + s + "'");
    const int n = std::stoi(m[1]), k = std::stoi(m[2]);
    SC_CHECK(n == 1 || k == 100, ErrorCode::kConfig,
             "multi-speaker settings are all-seen only");
    return n > 1 ? n_speakers_all_seen(n) : one_speaker_k_seen(k);
  }
};

struct DevicePlan {
  std::string device_id;
  std::vector<std::string> speakers;
  std::vector<std::string> learn;  // offloaded in the learning phase
  std::vector<std::string> test;
};

namespace detail {

using TranscriptGroups = std::map<std::string, std::vector<std::string>>;

inline TranscriptGroups group_by_transcript(const Manifest& m,
                                            const std::vector<std::string>& speakers) {
  TranscriptGroups g;
  for (const auto& r : m.records()) {
    if (std::find(speakers.begin(), speakers.end(), r.speaker_id) != speakers.end()) {
      g[r.transcript].push_back(r.utterance_id);
    }
  }
  return g;
}

// One random utterance per transcript is cached; the others are returned.
inline std::vector<std::string> pick_learning(const TranscriptGroups& g,
                                              const std::vector<std::string>& transcripts,
                                              std::mt19937_64& rng, DevicePlan& plan) {
  std::vector<std::string> rest;
  for (const auto& t : transcripts) {
    const auto& ids = g.at(t);
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      (i == pick ? plan.learn : rest).push_back(ids[i]);
    }
  }
  return rest;
}

template <typename T>
void take_first(std::vector<T>& v, std::size_t n, std::mt19937_64& rng) {
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(std::min(n, v.size()));
}

}  // namespace detail

// Splits the manifest into per-device learning and test sets.
inline std::vector<DevicePlan> plan_setting(const Manifest& manifest, const Setting& setting,
                                            std::uint64_t seed) {
  std::vector<std::string> speakers;
  for (const auto& r : manifest.records()) {
    if (std::find(speakers.begin(), speakers.end(), r.speaker_id) == speakers.end()) {
      speakers.push_back(r.speaker_id);
    }
  }
  std::sort(speakers.begin(), speakers.end());

  std::vector<std::vector<std::string>> devices;
  if (setting.kind == SettingKind::kNSpkAllSeen) {
    std::mt19937_64 rng(mix_seed(seed, 0x5350));
    std::shuffle(speakers.begin(), speakers.end(), rng);
    const auto n = static_cast<std::size_t>(setting.n);
    for (std::size_t i = 0; i + n <= speakers.size(); i += n) {
      std::vector<std::string> group(speakers.begin() + static_cast<std::ptrdiff_t>(i),
                                     speakers.begin() + static_cast<std::ptrdiff_t>(i + n));
      std::sort(group.begin(), group.end());
      devices.push_back(std::move(group));
    }
    SC_CHECK(!devices.empty(), ErrorCode::kInfeasibleSetting,
             setting.name() + " needs at least " + std::to_string(n) + " speakers");
  } else {
    for (const auto& s : speakers) devices.push_back({s});
  }

  std::vector<DevicePlan> plans;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    DevicePlan plan;
    plan.speakers = devices[d];
    plan.device_id = "dev" + std::to_string(d);
    for (const auto& s : plan.speakers) plan.device_id += "_" + s;
    std::mt19937_64 rng(mix_seed(seed, 1000 + d));
    const auto groups = detail::group_by_transcript(manifest, plan.speakers);
    std::vector<std::string> transcripts;
    for (const auto& [t, ids] : groups) transcripts.push_back(t);

    if (setting.kind != SettingKind::kOneSpkKSeen) {
      plan.test = detail::pick_learning(groups, transcripts, rng, plan);
    } else {
      // Cache half of the transcripts (rounded up), hold out the rest, then
      // mix seen and unseen test inputs at k : (100 - k).
      const std::size_t nt = transcripts.size();
      const auto k = static_cast<std::size_t>(setting.k);
      const std::size_t held = nt / 2;
      if (held == 0) continue;  // a single transcript cannot be split
      std::shuffle(transcripts.begin(), transcripts.end(), rng);
      const std::vector<std::string> cached(transcripts.begin(),
                                            transcripts.end() - static_cast<std::ptrdiff_t>(held));
      auto seen = detail::pick_learning(groups, cached, rng, plan);
      std::vector<std::string> unseen;
      for (std::size_t i = nt - held; i < nt; ++i) {
        const auto& ids = groups.at(transcripts[i]);
        unseen.insert(unseen.end(), ids.begin(), ids.end());
      }
      std::size_t u = unseen.size(), s = 0;
      if (k > 0) {
        s = static_cast<std::size_t>(std::llround(static_cast<double>(u * k) / static_cast<double>(100 - k)));
        if (s > seen.size()) {
          s = seen.size();
          u = static_cast<std::size_t>(std::llround(static_cast<double>(s * (100 - k)) / static_cast<double>(k)));
        }
      }
      detail::take_first(seen, s, rng);
      detail::take_first(unseen, u, rng);
      plan.test = std::move(seen);
      plan.test.insert(plan.test.end(), unseen.begin(), unseen.end());
    }
    if (plan.test.empty()) continue;
    std::shuffle(plan.learn.begin(), plan.learn.end(), rng);
    std::shuffle(plan.test.begin(), plan.test.end(), rng);
    plans.push_back(std::move(plan));
  }
  SC_CHECK(!plans.empty(), ErrorCode::kInfeasibleSetting,
           setting.name() + " leaves no device with both cached transcripts and test inputs");
  return plans;
}

struct InputResult {
  std::string utterance_id;
  std::string speaker_id;
  cache::Level level = cache::Level::kOffload;
  int bucket = 1;
  bool l1_queried = false;
  bool l2_queried = false;
  bool correct = true;
  double duration_s = 0.0;
  double latency_ms = 0.0;
  double energy_mj = 0.0;
};

struct Metrics {
  std::size_t inputs = 0;
  std::size_t l1_received = 0, l1_hits = 0, l1_correct = 0;
  std::size_t l2_received = 0, l2_hits = 0, l2_correct = 0;
  std::size_t offloads = 0;
  double latency_ms = 0.0, energy_mj = 0.0, audio_s = 0.0;

  void add(const InputResult& r) {
    ++inputs;
    l1_received += r.l1_queried;
    l2_received += r.l2_queried;
    switch (r.level) {
      case cache::Level::kL1Hit: ++l1_hits; l1_correct += r.correct; break;
      case cache::Level::kL2Hit: ++l2_hits; l2_correct += r.correct; break;
      case cache::Level::kOffload: ++offloads; break;
    }
    latency_ms += r.latency_ms;
    energy_mj += r.energy_mj;
    audio_s += r.duration_s;
  }

  static std::optional<double> ratio(std::size_t a, std::size_t b) {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  }
  std::optional<double> l1_filter_rate() const { return ratio(l1_hits, l1_received); }
  std::optional<double> l2_filter_rate() const { return ratio(l2_hits, l2_received); }
  std::optional<double> l1_accuracy() const { return ratio(l1_correct, l1_hits); }
  std::optional<double> l2_accuracy() const { return ratio(l2_correct, l2_hits); }
  double filter_rate() const { return *ratio(l1_hits + l2_hits, inputs); }
  double offload_fraction() const { return *ratio(offloads, inputs); }
  // Offloads are always right: the cloud answers with the gold label.
  double accuracy() const { return *ratio(l1_correct + l2_correct + offloads, inputs); }
  double mean_latency_ms() const { return latency_ms / static_cast<double>(inputs); }
  double mean_energy_mj() const { return energy_mj / static_cast<double>(inputs); }
  double rtf() const { return latency_ms / 1000.0 / audio_s; }

  // Offload share = 1 - combined filter rate; accuracy is the hit-weighted
  // sum of level accuracies. Throws if either identity is off.
  void check_identities() const {
    SC_CHECK(inputs > 0, ErrorCode::kConfig, "no inputs");
    SC_CHECK(l1_hits + l2_hits + offloads == inputs, ErrorCode::kConfig, "outcome counts drifted");
    SC_CHECK(std::fabs(offload_fraction() - (1.0 - filter_rate())) < 1e-12, ErrorCode::kConfig,
             "offload fraction != 1 - filter rate");
    const double n = static_cast<double>(inputs);
    const double weighted = static_cast<double>(l1_hits) / n * l1_accuracy().value_or(0.0) +
                            static_cast<double>(l2_hits) / n * l2_accuracy().value_or(0.0) +
                            static_cast<double>(offloads) / n;
    SC_CHECK(std::fabs(weighted - accuracy()) < 1e-12, ErrorCode::kConfig,
             "accuracy != level-weighted accuracies");
  }
};

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  return {{"inputs", m.inputs},
          {"l1_received", m.l1_received},
          {"l1_hits", m.l1_hits},
          {"l2_received", m.l2_received},
          {"l2_hits", m.l2_hits},
          {"offloads", m.offloads},
          {"l1_filter_rate", opt_json(m.l1_filter_rate())},
          {"l1_cache_accuracy", opt_json(m.l1_accuracy())},
          {"l2_filter_rate", opt_json(m.l2_filter_rate())},
          {"l2_cache_accuracy", opt_json(m.l2_accuracy())},
          {"filter_rate", m.filter_rate()},
          {"offload_fraction", m.offload_fraction()},
          {"accuracy", m.accuracy()},
          {"mean_latency_ms", m.mean_latency_ms()},
          {"rtf", m.rtf()},
          {"energy_mj", m.mean_energy_mj()}};
}

struct DeviceResult {
  DevicePlan plan;
  std::vector<InputResult> inputs;
  std::size_t cache_entries = 0;
  std::array<cloud::BucketTraining, cache::kBuckets> training;
  std::optional<cache::ThresholdMlp::FitReport> l1_mlp_fit, l2_mlp_fit;
  std::string trace;  // NDJSON device<->cloud exchange, if requested
};

struct BenchmarkResult {
  Setting setting;
  SystemConfig config;
  std::vector<DeviceResult> devices;
  Metrics overall;
  std::map<std::string, Metrics> per_speaker;
  std::string trace;  // device traces concatenated in plan order
};

namespace detail {

struct RunContext {
  const Corpus& corpus;
  const SystemConfig& cfg;
  std::shared_ptr<const dsp::FrontendModel> frontend;
  const l2::PhonemeModel& initial;
  bool trace = false;
};

// Per-level thresholds from the learning pool: for every cached entry,
// losses of same-intent augmentations are positives and the rest negatives.
inline void fit_threshold_mlps(cache::Device& dev,
                               const std::vector<std::pair<IntentId, std::vector<RowMatrix<float>>>>& probes,
                               const SystemConfig& cfg, DeviceResult& out) {
  std::vector<std::size_t> len1, len2;
  std::vector<double> tgt1, tgt2;
  std::vector<std::vector<ctc::PosteriorSequence>> posts(probes.size());
  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (const auto& f : probes[p].second) {
      const double dur = static_cast<double>(f.rows()) / 50.0;
      const auto model = dev.model(cache::route(std::max(dur, 1e-3), cfg.device.buckets).bucket);
      posts[p].push_back(l2::phoneme_posteriors(f, *model));
    }
  }
  for (const auto& rec : dev.store().records()) {
    std::vector<double> pos1, neg1, pos2, neg2;
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const bool same = probes[p].first == rec.intent;
      for (std::size_t a = 0; a < probes[p].second.size(); ++a) {
        const double l2v = l2::entry_loss(posts[p][a], rec.l2);
        if (std::isfinite(l2v)) (same ? pos2 : neg2).push_back(l2v);
        if (rec.l1) {
          const double l1v = l1::entry_loss(probes[p].second[a], *rec.l1, cfg.device.l1);
          if (std::isfinite(l1v)) (same ? pos1 : neg1).push_back(l1v);
        }
      }
    }
    if (const auto t = cache::threshold_target(pos2, neg2)) {
      len2.push_back(rec.l2.key.size());
      tgt2.push_back(*t);
    }
    if (rec.l1) {
      if (const auto t = cache::threshold_target(pos1, neg1)) {
        len1.push_back(rec.l1->key.size());
        tgt1.push_back(*t);
      }
    }
  }
  auto& policy = dev.mutable_config().thresholds;
  if (!len1.empty()) {
    auto m = cache::ThresholdMlp::create(mix_seed(cfg.seed, 0x4d31));
    out.l1_mlp_fit = m.fit(len1, tgt1);
    policy.l1_mlp = m;
  }
  if (!len2.empty()) {
    auto m = cache::ThresholdMlp::create(mix_seed(cfg.seed, 0x4d32));
    out.l2_mlp_fit = m.fit(len2, tgt2);
    policy.l2_mlp = m;
  }
}

inline DeviceResult run_device(const DevicePlan& plan, std::size_t device_index,
                               const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& manifest = ctx.corpus.manifest;
  DeviceResult out;
  out.plan = plan;

  auto initial = std::make_shared<const l2::PhonemeModel>(ctx.initial.clone());
  cache::Device dev(cfg.device, ctx.frontend, {initial, initial, initial});
  auto cloud_cfg = cfg.cloud;
  cloud_cfg.seed = mix_seed(cfg.seed, 2000 + device_index);
  cloud_cfg.finetune.seed = mix_seed(cloud_cfg.seed, 7);
  cloud::Cloud cloud(manifest, ctx.corpus.lexicon, ctx.frontend, cloud_cfg, ctx.initial);
  std::ostringstream trace;
  if (ctx.trace) cloud.set_trace(&trace);

  auto apply_push = [&](const cloud::ModelPush& p) {
    for (std::size_t b = 0; b < cache::kBuckets; ++b) dev.push_model(static_cast<int>(b + 1), p.models[b]);
  };

  // Learning phase: every cached input goes to the cloud.
  std::vector<std::pair<IntentId, std::vector<RowMatrix<float>>>> probes;
  for (const auto& id : plan.learn) {
    const auto& wave = ctx.corpus.wave(id);
    const auto feats = dsp::extract_features(wave, *ctx.frontend).frames;
    cloud::OffloadRequest req{plan.device_id, id, &wave, &feats, true};
    auto resp = cloud.resolve(req);
    dev.install(std::move(resp.l1), std::move(*resp.l2));
    if (resp.push) apply_push(*resp.push);
    if (cfg.threshold_mlp) probes.emplace_back(resp.intent, std::move(resp.augmented));
  }
  apply_push(cloud.sync());
  for (std::size_t b = 0; b < cache::kBuckets; ++b) out.training[b] = cloud.training(static_cast<int>(b + 1));
  if (cfg.threshold_mlp) fit_threshold_mlps(dev, probes, cfg, out);
  out.cache_entries = dev.store().size();

  // Test phase: models and cache contents stay as they are.
  for (std::size_t i = 0; i < plan.test.size(); ++i) {
    const auto& id = plan.test[i];
    const auto& rec = manifest.at(id);
    const auto& wave = ctx.corpus.wave(id);
    const auto feats = dsp::extract_features(wave, *ctx.frontend).frames;
    const auto o = dev.lookup_features(feats, wave.duration_s());
    InputResult r;
    r.utterance_id = id;
    r.speaker_id = rec.speaker_id;
    r.level = o.level;
    r.bucket = o.route.bucket;
    r.l1_queried = o.l1_queried;
    r.l2_queried = o.l2_queried;
    r.duration_s = wave.duration_s();
    const IntentId gold = manifest.intent_id(rec.intent);
    if (o.level == cache::Level::kOffload) {
      cloud::OffloadRequest req{plan.device_id, id, &wave, &feats, false};
      r.correct = cloud.resolve(req).intent == gold;
    } else {
      r.correct = o.intent == gold;
    }
    r.latency_ms = account_latency(o.level, r.duration_s, cfg.latency,
                                   mix_seed(mix_seed(cfg.seed, 3000 + device_index), i));
    r.energy_mj = account_energy(r.latency_ms, cfg.latency);
    out.inputs.push_back(std::move(r));
  }
  out.trace = trace.str();
  return out;
}

}  // namespace detail

// Runs every device plan (in parallel when workers > 1) and reduces the
// results in plan order, so the outcome does not depend on scheduling.
inline BenchmarkResult run_benchmark(const Corpus& corpus, const Setting& setting,
                                     SystemConfig cfg, bool trace = false) {
  cfg.cloud.buckets = cfg.device.buckets;
  cfg.cloud.l1 = cfg.device.l1;
  const auto plans = plan_setting(corpus.manifest, setting, cfg.seed);
  auto frontend = std::make_shared<const dsp::FrontendModel>(
      dsp::FrontendModel::create(dsp::FrontendConfig{}, cfg.frontend_seed));

  auto model_cfg = cfg.model;
  model_cfg.input_dim = frontend->config().channels;
  model_cfg.outputs = l2::kAlphabetSize;
  auto initial = l2::PhonemeModel::create(model_cfg, cfg.model_seed);
  if (cfg.pretrain_fraction > 0.0) {
    auto fc = cfg.cloud.finetune;
    fc.seed = mix_seed(cfg.seed, 0x7072);
    cloud::in_domain_pretrain(
        initial, corpus.manifest, corpus.lexicon,
        [&](const std::string& id) -> const dsp::Waveform& { return corpus.wave(id); }, *frontend,
        cfg.pretrain_fraction, fc, mix_seed(cfg.seed, 0x7073));
  }
  initial.set_requires_grad(false);

  const detail::RunContext ctx{corpus, cfg, frontend, initial, trace};
  std::vector<std::optional<DeviceResult>> results(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        results[i] = detail::run_device(plans[i], i, ctx);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(cfg.workers, plans.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BenchmarkResult res;
  res.setting = setting;
  res.config = cfg;
  for (auto& r : results) {
    for (const auto& in : r->inputs) {
      res.overall.add(in);
      res.per_speaker[in.speaker_id].add(in);
    }
    res.trace += r->trace;
    res.devices.push_back(std::move(*r));
  }
  res.overall.check_identities();
  for (const auto& [s, m] : res.per_speaker) m.check_identities();
  return res;
}

inline nlohmann::ordered_json to_json(const BenchmarkResult& r) {
  nlohmann::ordered_json j;
  j["format"] = "speechcache-report";
  j["version"] = kReportVersion;
  j["setting"] = {{"name", r.setting.name()}, {"k", r.setting.k}, {"n", r.setting.n}};
  j["seed"] = r.config.seed;
  auto cfg = to_json(r.config);
  cfg.erase("workers");  // scheduling only; results do not depend on it
  j["config"] = cfg;
  j["metrics"] = to_json(r.overall);
  auto& ps = j["per_speaker"];
  ps = nlohmann::ordered_json::array();
  for (const auto& [s, m] : r.per_speaker) {
    auto e = to_json(m);
    e["speaker"] = s;
    ps.push_back(e);
  }
  auto& devs = j["devices"];
  devs = nlohmann::ordered_json::array();
  for (const auto& d : r.devices) {
    nlohmann::ordered_json e;
    e["id"] = d.plan.device_id;
    e["speakers"] = d.plan.speakers;
    e["learned"] = d.plan.learn.size();
    e["tested"] = d.plan.test.size();
    e["cache_entries"] = d.cache_entries;
    auto& bs = e["buckets"];
    bs = nlohmann::ordered_json::array();
    for (std::size_t b = 0; b < cache::kBuckets; ++b) {
      const auto& t = d.training[b];
      nlohmann::ordered_json x{{"bucket", b + 1}, {"pool", t.pool_size}, {"rounds", t.rounds},
                               {"diverged", t.diverged}};
      if (t.last && !t.last->epoch_loss.empty()) {
        x["epochs"] = t.last->epoch_loss.size();
        x["first_loss"] = t.last->epoch_loss.front();
        x["final_loss"] = t.last->epoch_loss.back();
      }
      bs.push_back(x);
    }
    if (d.l1_mlp_fit) e["l1_mlp_mse"] = d.l1_mlp_fit->mse;
    if (d.l2_mlp_fit) e["l2_mlp_mse"] = d.l2_mlp_fit->mse;
    devs.push_back(e);
  }
  OpsShapes shapes;
  shapes.gru = r.config.model;
  shapes.gru.input_dim = shapes.frontend.channels;
  shapes.l1_k = r.config.device.l1.kmeans.k;
  j["ops_budget"] = to_json(ops_budget(shapes));
  return j;
}

inline std::string report_string(const BenchmarkResult& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_BENCHMARK_HPP_
