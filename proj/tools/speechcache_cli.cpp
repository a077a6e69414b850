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

// speechcache: synthesize corpora, run cache benchmarks, check CTC values,
// render reports.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "speechcache/ctc/ctc.hpp"
#include "speechcache/ctc/oracle.hpp"
#include "speechcache/error.hpp"
#include "speechcache/harness/benchmark.hpp"
#include "speechcache/harness/report.hpp"
#include "speechcache/harness/synth.hpp"
#include "speechcache/harness/system_config.hpp"

namespace sc = speechcache;

namespace {

constexpr const char* kSeedEnv = "SPEECHCACHE_SEED";

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* v = std::getenv(kSeedEnv);
  if (!v || !*v) return fallback;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw sc::Error(sc::ErrorCode::kConfig, std::string(kSeedEnv) + " is not an integer: " + v);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  SC_CHECK(in.good(), sc::ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  SC_CHECK(out.good(), sc::ErrorCode::kIo, "cannot write " + path);
  out << text;
}

// "0.5,0.5;0.2,0.8" -> T x V matrix.
sc::RowMatrix<double> parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::vector<double> r;
    std::stringstream cs(row);
    std::string cell;
    while (std::getline(cs, cell, ',')) r.push_back(std::stod(cell));
    SC_CHECK(!r.empty() && (rows.empty() || r.size() == rows[0].size()), sc::ErrorCode::kShapeError,
             "ragged probability matrix");
    rows.push_back(std::move(r));
  }
  SC_CHECK(!rows.empty(), sc::ErrorCode::kShapeError, "empty probability matrix");
  sc::RowMatrix<double> m(rows.size(), rows[0].size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t v = 0; v < rows[t].size(); ++v) m(t, v) = rows[t][v];
  }
  return m;
}

sc::SymbolSequence parse_symbols(const std::string& text) {
  sc::SymbolSequence out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level speech command cache: corpus synthesis and benchmarks"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (manifest, lexicon, wavs)");
  sc::harness::SynthSpec spec;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--speakers", spec.speakers, "Speakers")->capture_default_str();
  synth->add_option("--transcripts", spec.transcripts, "Distinct transcripts")->capture_default_str();
  synth->add_option("--repeats", spec.repeats, "Renderings per speaker and transcript")->capture_default_str();
  synth->add_option("--intents", spec.intents, "Intent labels (0: one per transcript)")->capture_default_str();
  synth->add_option("--vocabulary", spec.vocabulary, "Word vocabulary size")->capture_default_str();
  synth->add_option("--words-min", spec.words_min, "Minimum words per transcript")->capture_default_str();
  synth->add_option("--words-max", spec.words_max, "Maximum words per transcript")->capture_default_str();
  synth->add_option("--jitter", spec.jitter, "Repeat variation scale (0: identical repeats)")->capture_default_str();
  synth->add_option("--noise", spec.noise, "Noise sigma relative to peak")->capture_default_str();
  synth->add_option("--far-fraction", spec.far_fraction, "Share of far-field renderings")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed (default: $SPEECHCACHE_SEED or 1)");

  // run
  auto* run = app.add_subcommand("run", "Run a benchmark setting and write a JSON report");
  std::string manifest_path, lexicon_path, setting_name = "1spk-100seen", config_path, report_out,
                             trace_out;
  nlohmann::json overrides = nlohmann::json::object();
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> workers, hidden, max_epochs;
  std::optional<double> lr, l1_threshold, l2_threshold, pretrain;
  bool no_finetune = false, threshold_mlp = false;
  run->add_option("-m,--manifest", manifest_path, "Manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  run->add_option("-l,--lexicon", lexicon_path, "Lexicon (default: lexicon.txt beside the manifest)");
  run->add_option("-s,--setting", setting_name, "<n>spk-<k>seen, e.g. 1spk-100seen, 1spk-70seen, 3spk-100seen")
      ->capture_default_str();
  run->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  run->add_option("-o,--out", report_out, "Report path (default: stdout)");
  run->add_option("--trace", trace_out, "Write the device/cloud exchange as NDJSON");
  run->add_option("--seed", run_seed, "Seed (default: config, then $SPEECHCACHE_SEED, then 1)");
  run->add_option("--workers", workers, "Parallel devices");
  run->add_option("--hidden", hidden, "GRU hidden size");
  run->add_option("--max-epochs", max_epochs, "Finetuning epoch cap");
  run->add_option("--lr", lr, "Finetuning learning rate");
  run->add_option("--l1-threshold", l1_threshold, "L1 threshold, all buckets");
  run->add_option("--l2-threshold", l2_threshold, "L2 threshold, all buckets");
  run->add_option("--pretrain-fraction", pretrain, "In-domain pretraining share of the corpus");
  run->add_flag("--no-finetune", no_finetune, "Keep the extractors frozen");
  run->add_flag("--threshold-mlp", threshold_mlp, "Fit per-level threshold MLPs after learning");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "CTC loss vs. brute-force path enumeration");
  std::string probs_text, target_text, mode_name = "standard";
  int blank = 0;
  oracle->add_option("-p,--probs", probs_text, "Row-stochastic T x V matrix, rows ';' cells ','")->required();
  oracle->add_option("-t,--target", target_text, "Comma-separated label IDs")->required();
  oracle->add_option("--mode", mode_name, "standard (blank) or merge (blank-free)")
      ->check(CLI::IsMember({"standard", "merge"}))
      ->capture_default_str();
  oracle->add_option("--blank", blank, "Blank ID in standard mode")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Render a JSON report as a table");
  std::string report_in, format = "markdown";
  report->add_option("report", report_in, "Report JSON")->required()->check(CLI::ExistingFile);
  report->add_option("-f,--format", format, "markdown or text")
      ->check(CLI::IsMember({"markdown", "text"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      spec.seed = synth_seed.value_or(env_seed(spec.seed));
      const auto corpus = sc::harness::synth_dataset(spec);
      sc::harness::save_corpus(corpus, synth_out);
      std::cerr << "wrote " << corpus.manifest.size() << " utterances to " << synth_out << "\n";
    } else if (*run) {
      sc::harness::SystemConfig cfg;
      cfg.seed = env_seed(cfg.seed);
      if (!config_path.empty()) {
        cfg = sc::harness::load_system_config(config_path);
        const auto file = nlohmann::json::parse(read_file(config_path), nullptr, true, true);
        if (!file.contains("seed")) cfg.seed = env_seed(cfg.seed);
      }
      if (run_seed) overrides["seed"] = *run_seed;
      if (workers) overrides["workers"] = *workers;
      if (hidden) overrides["hidden"] = *hidden;
      if (max_epochs) overrides["max_epochs"] = *max_epochs;
      if (lr) overrides["lr"] = *lr;
      if (l1_threshold) overrides["l1_threshold"] = *l1_threshold;
      if (l2_threshold) overrides["l2_threshold"] = *l2_threshold;
      if (pretrain) overrides["pretrain_fraction"] = *pretrain;
      if (no_finetune) overrides["finetune"] = false;
      if (threshold_mlp) overrides["threshold_mlp"] = true;
      sc::harness::apply_config(cfg, overrides);

      if (lexicon_path.empty()) {
        lexicon_path = (std::filesystem::path(manifest_path).parent_path() / "lexicon.txt").string();
      }
      const auto corpus = sc::harness::load_corpus(manifest_path, lexicon_path);
      const auto setting = sc::harness::Setting::parse(setting_name);
      const auto result = sc::harness::run_benchmark(corpus, setting, cfg, !trace_out.empty());
      const auto text = sc::harness::report_string(result);
      if (report_out.empty()) {
        std::cout << text;
      } else {
        write_file(report_out, text);
      }
      if (!trace_out.empty()) write_file(trace_out, result.trace);
    } else if (*oracle) {
      const auto mode = mode_name == "standard" ? sc::ctc::CollapseMode::kStandardCtc
                                                : sc::ctc::CollapseMode::kRepeatMerge;
      const auto posts = sc::ctc::PosteriorSequence::from_probs(
          parse_matrix(probs_text),
          mode == sc::ctc::CollapseMode::kStandardCtc ? std::optional<sc::Symbol>(blank) : std::nullopt);
      const auto target = parse_symbols(target_text);
      const double brute = sc::ctc::brute_force_ctc(posts, target, mode);
      std::cout.precision(17);
      std::cout << "brute_force_probability " << brute << "\n";
      if (sc::ctc::is_feasible(static_cast<std::size_t>(posts.frames()), target, mode)) {
        const double loss = sc::ctc::ctc_loss(posts, target, mode);
        std::cout << "ctc_loss " << loss << "\n"
                  << "ctc_probability " << std::exp(-loss) << "\n"
                  << "relative_error "
                  << (brute > 0.0 ? std::fabs(std::exp(-loss) - brute) / brute : 0.0) << "\n";
      } else {
        std::cout << "ctc_loss infeasible\n";
      }
    } else if (*report) {
      const auto j = nlohmann::json::parse(read_file(report_in));
      std::cout << (format == "markdown" ? sc::harness::render_markdown(j)
                                         : sc::harness::render_text(j));
    }
  } catch (const sc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: bad number: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
