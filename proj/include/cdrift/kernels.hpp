// Copyright 2026 The cdrift Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdrift/counterfactual_engine.hpp"
#include "cdrift/toy_policy.hpp"

namespace cdrift {

struct LossStats {
  double loss = 0.0;
  double mean_margin = 0.0;
  double reward_accuracy = 0.0;  // fraction of pairs with a positive margin
  std::size_t pairs = 0;
};

/// Reference-policy log-probabilities of one pair's two sides.
struct RefLogprobs {
  double chosen = 0.0;
  double rejected = 0.0;
};

RefLogprobs reference_logprobs(const PolicyParams& ref, const PreferencePair& pair);

/// Hot loops in two flavours. The serial versions are the reference; the
/// OpenMP versions compute each item into its own buffer and reduce in item
/// order, so both return bit-identical results for any thread count.
namespace kernels {

std::vector<double> score_visuals_serial(const PolicyParams& params, const ThinkingTrace& trace,
                                         std::span<const TokenId> prompt,
                                         std::span<const VisualContext> visuals);
std::vector<double> score_visuals_parallel(const PolicyParams& params, const ThinkingTrace& trace,
                                           std::span<const TokenId> prompt,
                                           std::span<const VisualContext> visuals);

/// Preference loss over pairs[indices] and its gradient with respect to
/// token_weights, written into `grad` (resized and overwritten).
LossStats batch_loss_grad_serial(const PolicyParams& params, std::span<const PreferencePair> pairs,
                                 std::span<const RefLogprobs> ref, std::span<const std::size_t> indices,
                                 double beta, Matrix& grad);
LossStats batch_loss_grad_parallel(const PolicyParams& params,
                                   std::span<const PreferencePair> pairs,
                                   std::span<const RefLogprobs> ref,
                                   std::span<const std::size_t> indices, double beta, Matrix& grad);

}  // namespace kernels
}  // namespace cdrift
