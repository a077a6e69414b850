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

#ifndef SPEECHCACHE_HARNESS_SYNTH_HPP_
#define SPEECHCACHE_HARNESS_SYNTH_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "speechcache/cloud/lexicon.hpp"
#include "speechcache/dsp/waveform.hpp"
#include "speechcache/error.hpp"
#include "speechcache/harness/manifest.hpp"
#include "speechcache/l2/phonemes.hpp"
#include "speechcache/types.hpp"

namespace speechcache::harness {

struct SynthSpec {
  std::size_t vocabulary = 40;
  std::size_t transcripts = 10;
  std::size_t speakers = 1;
  std::size_t repeats = 5;
  std::size_t intents = 0;  // 0: one intent per transcript
  std::size_t words_min = 3, words_max = 7;
  std::size_t phones_min = 3, phones_max = 5;
  // 0 renders every repeat of a (speaker, transcript) pair identically.
  double jitter = 1.0;
  double timing_jitter = 0.05;
  double pitch_jitter = 0.05;
  double noise = 0.01;  // Gaussian sigma as a fraction of peak amplitude
  double far_fraction = 0.0;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
};

struct Corpus {
  Manifest manifest;
  cloud::Lexicon lexicon;
  std::map<std::string, dsp::Waveform> audio;

  const dsp::Waveform& wave(const std::string& utterance_id) const {
    const auto it = audio.find(utterance_id);
    SC_CHECK(it != audio.end(), ErrorCode::kNotInManifest,
             "no audio for utterance '" + utterance_id + "'");
    return it->second;
  }
};

namespace detail {

// Formant-like signature of one phoneme: two resonance tones on a 7x6 grid
// plus a duration class.
struct PhoneShape {
  double f1, f2, seconds;
};

inline PhoneShape phone_shape(Symbol p) {
  const int i = p - 1;
  const double a = (i % 7) / 6.0;
  const double b = (i / 7) / 5.0;
  return {280.0 + 620.0 * a, 950.0 + 1850.0 * b, 0.10 + 0.03 * ((i * 3) % 5) / 4.0};
}

struct Speaker {
  double formant_scale, f0;
};

inline Speaker make_speaker(std::size_t s, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x5bea0000 + s));
  return {std::uniform_real_distribution<double>(0.94, 1.06)(rng),
          std::uniform_real_distribution<double>(100.0, 220.0)(rng)};
}

inline std::string make_word(std::size_t index, std::mt19937_64& rng) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::string w;
  const int syl = 2 + static_cast<int>(rng() % 2);
  for (int k = 0; k < syl; ++k) {
    w += kOnsets[rng() % 14];
    w += kNuclei[rng() % 7];
  }
  return w + std::to_string(index);
}

struct RenderJitter {
  double tempo = 1.0, pitch = 1.0;
  std::vector<double> segment;  // per-phoneme duration factors
  std::uint64_t phase_seed = 0;
  double noise = 0.0;
  bool far = false;
};

inline dsp::Waveform render(const std::vector<SymbolSequence>& words, const Speaker& spk,
                            const RenderJitter& j, int fs, std::mt19937_64& noise_rng) {
  std::vector<float> out;
  auto silence = [&](double sec) {
    out.insert(out.end(), static_cast<std::size_t>(std::lround(sec * j.tempo * fs)), 0.0f);
  };
  std::mt19937_64 phase_rng(j.phase_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  const double ramp = 0.008 * fs;
  silence(0.12);
  std::size_t seg = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w > 0) silence(0.05);
    for (Symbol p : words[w]) {
      const auto shape = phone_shape(p);
      const double f1 = shape.f1 * spk.formant_scale * j.pitch;
      const double f2 = shape.f2 * spk.formant_scale * j.pitch;
      const double f0 = spk.f0 * j.pitch;
      const double ph1 = phase(phase_rng), ph2 = phase(phase_rng), ph0 = phase(phase_rng);
      const auto n = static_cast<std::size_t>(
          std::lround(shape.seconds * j.tempo * j.segment[seg++] * fs));
      for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / fs;
        double env = 1.0;
        if (k < ramp) env = 0.5 - 0.5 * std::cos(M_PI * k / ramp);
        if (n - k < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * (n - k) / ramp));
        const double v = 0.5 * std::sin(2 * M_PI * f1 * t + ph1) +
                         0.35 * std::sin(2 * M_PI * f2 * t + ph2) +
                         0.15 * std::sin(2 * M_PI * f0 * t + ph0);
        out.push_back(static_cast<float>(env * v));
      }
    }
  }
  silence(0.12);
  float peak = 0.0f;
  for (float v : out) peak = std::max(peak, std::fabs(v));
  const float gain = (j.far ? 0.2f : 0.5f) / std::max(peak, 1e-6f);
  for (auto& v : out) v *= gain;
  if (j.far) {
    // Two-tap room echo.
    const std::size_t d1 = static_cast<std::size_t>(0.011 * fs), d2 = static_cast<std::size_t>(0.029 * fs);
    for (std::size_t k = out.size(); k-- > d1;) {
      out[k] += 0.35f * out[k - d1] + (k >= d2 ? 0.2f * out[k - d2] : 0.0f);
    }
  }
  if (j.noise > 0.0) {
    peak = 0.0f;
    for (float v : out) peak = std::max(peak, std::fabs(v));
    std::normal_distribution<double> n(0.0, j.noise * peak);
    for (auto& v : out) v = static_cast<float>(v + n(noise_rng));
  }
  for (auto& v : out) v = std::clamp(v, -1.0f, 1.0f);
  dsp::Waveform wave;
  wave.samples = std::move(out);
  wave.sample_rate = fs;
  return wave;
}

}  // namespace detail

// Deterministic toy corpus: each word is a random phoneme string, each
// transcript a random word sequence, each phoneme a formant-tone segment.
inline Corpus synth_dataset(const SynthSpec& spec) {
  SC_CHECK(spec.vocabulary >= 1 && spec.transcripts >= 1 && spec.speakers >= 1 &&
               spec.repeats >= 1 && spec.words_min >= 1 && spec.words_min <= spec.words_max &&
               spec.phones_min >= 1 && spec.phones_min <= spec.phones_max,
           ErrorCode::kConfig, "invalid synthetic corpus spec");
  std::mt19937_64 rng(mix_seed(spec.seed, 1));
  Corpus c;
  std::vector<std::string> vocab;
  std::set<std::string> used;
  std::uniform_int_distribution<Symbol> phone(1, static_cast<Symbol>(l2::kPhonemeCount));
  while (vocab.size() < spec.vocabulary) {
    const std::string w = detail::make_word(vocab.size(), rng);
    if (!used.insert(w).second) continue;
    const std::size_t len = spec.phones_min + rng() % (spec.phones_max - spec.phones_min + 1);
    SymbolSequence seq;
    while (seq.size() < len) {
      const Symbol p = phone(rng);
      if (!seq.empty() && seq.back() == p) continue;
      seq.push_back(p);
    }
    c.lexicon.add(w, seq);
    vocab.push_back(w);
  }

  std::vector<std::vector<std::size_t>> transcripts;
  std::set<std::vector<std::size_t>> seen;
  std::size_t attempts = 0;
  while (transcripts.size() < spec.transcripts) {
    SC_CHECK(++attempts < 100000, ErrorCode::kConfig, "vocabulary too small for distinct transcripts");
    const std::size_t n = spec.words_min + rng() % (spec.words_max - spec.words_min + 1);
    std::vector<std::size_t> t(n);
    for (auto& w : t) w = rng() % vocab.size();
    if (seen.insert(t).second) transcripts.push_back(std::move(t));
  }

  const std::size_t n_intents = spec.intents == 0 ? spec.transcripts : spec.intents;
  std::vector<ManifestRecord> records;
  for (std::size_t s = 0; s < spec.speakers; ++s) {
    const auto spk = detail::make_speaker(s, spec.seed);
    for (std::size_t t = 0; t < transcripts.size(); ++t) {
      std::string text;
      std::vector<SymbolSequence> words;
      for (std::size_t w : transcripts[t]) {
        if (!text.empty()) text += ' ';
        text += vocab[w];
        words.push_back(*c.lexicon.find(vocab[w]));
      }
      std::size_t n_phones = 0;
      for (const auto& w : words) n_phones += w.size();
      for (std::size_t r = 0; r < spec.repeats; ++r) {
        const std::uint64_t key = (s * 1000003 + t) * 1009 + r;
        std::mt19937_64 jr(mix_seed(spec.seed, 0x10000000 + (spec.jitter > 0 ? key : (s * 1000003 + t) * 1009)));
        detail::RenderJitter j;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        j.tempo = 1.0 + spec.jitter * spec.timing_jitter * u(jr);
        j.pitch = 1.0 + spec.jitter * spec.pitch_jitter * u(jr);
        for (std::size_t k = 0; k < n_phones; ++k) {
          j.segment.push_back(1.0 + spec.jitter * spec.timing_jitter * u(jr));
        }
        j.phase_seed = jr();
        j.noise = spec.jitter * spec.noise;
        j.far = std::uniform_real_distribution<double>(0.0, 1.0)(jr) < spec.far_fraction;
        std::mt19937_64 noise_rng(jr());
        auto wave = detail::render(words, spk, j, spec.sample_rate, noise_rng);

        ManifestRecord rec;
        rec.speaker_id = "spk" + std::to_string(s);
        rec.utterance_id = rec.speaker_id + "_t" + std::to_string(t) + "_r" + std::to_string(r);
        rec.audio = "audio/" + rec.utterance_id + ".wav";
        rec.transcript = text;
        rec.intent = "intent" + std::to_string(t % n_intents);
        rec.condition = j.far ? "far" : "close";
        rec.duration_s = wave.duration_s();
        c.audio.emplace(rec.utterance_id, std::move(wave));
        records.push_back(std::move(rec));
      }
    }
  }
  c.manifest = Manifest(std::move(records));
  return c;
}

// Writes manifest.jsonl, lexicon.txt and audio/*.wav under `dir`.
inline void save_corpus(const Corpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "audio");
  for (const auto& r : c.manifest.records()) {
    dsp::write_wav((fs::path(dir) / r.audio).string(), c.wave(r.utterance_id));
  }
  c.manifest.save((fs::path(dir) / "manifest.jsonl").string());
  c.lexicon.save((fs::path(dir) / "lexicon.txt").string());
}

inline Corpus load_corpus(const std::string& manifest_path, const std::string& lexicon_path) {
  Corpus c;
  c.manifest = Manifest::load(manifest_path);
  c.lexicon = cloud::Lexicon::load(lexicon_path);
  for (const auto& r : c.manifest.records()) {
    c.audio.emplace(r.utterance_id, dsp::read_wav(c.manifest.audio_path(r)));
  }
  return c;
}

}  // namespace speechcache::harness

#endif  // SPEECHCACHE_HARNESS_SYNTH_HPP_
