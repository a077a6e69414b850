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

#ifndef SPEECHCACHE_CLOUD_FINETUNE_HPP_
#define SPEECHCACHE_CLOUD_FINETUNE_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "speechcache/ctc/ctc.hpp"
#include "speechcache/ctc/ctc_autodiff.hpp"
#include "speechcache/error.hpp"
#include "speechcache/l2/phonemes.hpp"
#include "speechcache/tensor/adam.hpp"
#include "speechcache/tensor/gru.hpp"

namespace speechcache::cloud {

struct TrainExample {
  RowMatrix<float> features;
  SymbolSequence target;  // blank-free phoneme IDs
};

struct FinetuneConfig {
  ad::AdamConfig adam;
  std::size_t batch = 16;
  std::size_t max_epochs = 50;
  // Stop once the epoch-mean loss improved by less than this fraction over
  // the last `patience` epochs.
  double min_improvement = 0.01;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
};

struct FinetuneReport {
  std::vector<double> epoch_loss;  // mean per-symbol CTC loss
  std::size_t steps = 0;
  std::size_t skipped = 0;  // examples whose target cannot fit their frames
  bool converged = false;
};

// Mean per-symbol StandardCtc loss of the model over `pool` (no graph).
template <typename S>
double mean_loss(const ad::GruStack<S>& model, const std::vector<TrainExample>& pool) {
  ad::NoGradGuard no_grad;
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ex : pool) {
    if (!ctc::is_feasible(static_cast<std::size_t>(ex.features.rows()), ex.target,
                          ctc::CollapseMode::kStandardCtc)) {
      continue;
    }
    const auto y = model.forward(ex.features.cast<S>().eval());
    ctc::PosteriorSequence p{y.matrix().template cast<double>(), l2::kBlank};
    total += ctc::ctc_loss(p, ex.target, ctc::CollapseMode::kStandardCtc) /
             static_cast<double>(ex.target.size());
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

// Minibatch Adam on summed per-symbol CTC losses. On a non-finite loss the
// model is restored to the start of the failing epoch and TrainingDiverged
// is thrown.
template <typename S>
FinetuneReport finetune(ad::GruStack<S>& model, const std::vector<TrainExample>& pool,
                        const FinetuneConfig& cfg) {
  SC_CHECK(!pool.empty(), ErrorCode::kConfig, "finetune needs a non-empty pool");
  SC_CHECK(cfg.batch >= 1, ErrorCode::kConfig, "batch size must be positive");
  FinetuneReport rep;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (ctc::is_feasible(static_cast<std::size_t>(pool[i].features.rows()), pool[i].target,
                         ctc::CollapseMode::kStandardCtc)) {
      usable.push_back(i);
    } else {
      ++rep.skipped;
    }
  }
  if (usable.empty()) return rep;

  model.set_requires_grad(true);
  ad::Adam<S> opt(model.parameters(), cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto checkpoint = model.to_tensors();
    std::shuffle(usable.begin(), usable.end(), rng);
    double epoch_total = 0.0;
    try {
      for (std::size_t start = 0; start < usable.size(); start += cfg.batch) {
        const std::size_t end = std::min(usable.size(), start + cfg.batch);
        opt.zero_grad();
        for (std::size_t b = start; b < end; ++b) {
          const auto& ex = pool[usable[b]];
          const auto lp = model.forward(ex.features.cast<S>().eval());
          const auto loss = ctc::ctc_loss_op(lp, ex.target, ctc::CollapseMode::kStandardCtc,
                                             l2::kBlank);
          const auto per_symbol = ad::scale(loss, static_cast<S>(1.0 / ex.target.size()));
          SC_CHECK(std::isfinite(per_symbol.item()), ErrorCode::kNumeric, "non-finite loss");
          epoch_total += per_symbol.item();
          ad::backward(per_symbol);
        }
        opt.step(1.0 / static_cast<double>(end - start));
        ++rep.steps;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric && e.code() != ErrorCode::kInfeasible) throw;
      const auto restored = ad::GruStack<S>::from_tensors(checkpoint);
      model = restored;
      throw Error(ErrorCode::kTrainingDiverged,
                  "training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    rep.epoch_loss.push_back(epoch_total / static_cast<double>(usable.size()));
    const std::size_t n = rep.epoch_loss.size();
    if (n > cfg.patience) {
      const double before = rep.epoch_loss[n - 1 - cfg.patience];
      if (rep.epoch_loss.back() > before * (1.0 - cfg.min_improvement)) {
        rep.converged = true;
        break;
      }
    }
  }
  return rep;
}

}  // namespace speechcache::cloud

#endif  // SPEECHCACHE_CLOUD_FINETUNE_HPP_
