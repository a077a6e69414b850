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

#ifndef SPEECHCACHE_CTC_CTC_AUTODIFF_HPP_
#define SPEECHCACHE_CTC_CTC_AUTODIFF_HPP_

#include <optional>
#include <vector>

#include "speechcache/ctc/ctc.hpp"
#include "speechcache/tensor/tensor.hpp"

namespace speechcache::ctc {

// CTC loss as a graph op over a (T x V) log-probability tensor. The backward
// pass writes -occupancy; chained through log_softmax_rows this yields the
// usual softmax - occupancy at the logits.
template <typename S>
ad::Tensor<S> ctc_loss_op(const ad::Tensor<S>& log_probs, const SymbolSequence& target,
                          CollapseMode mode, std::optional<Symbol> blank) {
  PosteriorSequence posts;
  posts.blank = blank;
  posts.log_probs = log_probs.matrix().template cast<double>();
  auto grad = ctc_loss_grad(posts, target, mode);
  const std::size_t T = log_probs.rows(), V = log_probs.cols();
  return ad::detail::make_result<S>(
      {1}, {static_cast<S>(grad.loss)}, {log_probs.node()},
      [T, V, g = std::move(grad.log_prob_grad)](ad::detail::Node<S>& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        const S up = self.grad[0];
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t k = 0; k < V; ++k) {
            p->grad[t * V + k] += up * static_cast<S>(g(static_cast<Eigen::Index>(t),
                                                        static_cast<Eigen::Index>(k)));
          }
        }
      },
      "ctc_loss");
}

}  // namespace speechcache::ctc

#endif  // SPEECHCACHE_CTC_CTC_AUTODIFF_HPP_
