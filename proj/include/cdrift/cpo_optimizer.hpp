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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdrift/counterfactual_engine.hpp"
#include "cdrift/kernels.hpp"
#include "cdrift/toy_policy.hpp"
#include "json.hpp"

namespace cdrift {

/// Which pair kinds reach the optimizer. `None` applies no filter at all.
enum class Ablation { Both, ThinkingOnly, PerceptionOnly, None };
std::string_view to_string(Ablation a);
Ablation ablation_from_string(std::string_view text);

struct TrainConfig {
  double beta = 0.1;
  double lr = 0.5;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::size_t window = 16;  // tau, in records
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::Both;
  bool parallel = true;
  /// Stop after this many updates; 0 means no cap.
  std::size_t max_steps = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  LossStats stats;  // averaged over the epoch's batches, measured before each update
};

nlohmann::json to_json(const EpochLog& log);

struct TrainResult {
  PolicyParams params;
  std::vector<EpochLog> log;
};

/// beta * ((log pi(t+) - log ref(t+)) - (log pi(t-) - log ref(t-))).
double reward_margin(const PolicyParams& params, const PolicyParams& ref, const PreferencePair& pair,
                     double beta);

/// Mean of -log sigmoid(margin) over the batch and its gradient with respect
/// to token_weights. Throws EmptyBatch.
LossStats cpo_loss_and_grad(const PolicyParams& params, const PolicyParams& ref,
                            std::span<const PreferencePair> batch, double beta, Matrix& grad);

std::vector<PreferencePair> filter_pairs(const std::vector<PreferencePair>& pairs, Ablation ablation);

/// Batches for one epoch: pairs are grouped into windows of `window`
/// consecutive context records (in stream order), shuffled within each
/// window, and cut into batches that never straddle a window.
std::vector<std::vector<std::size_t>> window_batches(const std::vector<PreferencePair>& pairs,
                                                     const TrainConfig& config, std::size_t epoch);

/// Gradient descent on the preference loss from `init` against the frozen
/// reference. Throws NoPairsAfterFilter.
TrainResult train_cpo(PolicyParams init, const PolicySnapshot& ref,
                      const std::vector<PreferencePair>& pairs, const TrainConfig& config);

// ---- maximum likelihood ----------------------------------------------------

struct SftConfig {
  double lr = 0.5;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  bool train_tokens = true;
  bool train_head = true;
  /// Fit the head at every think-span prefix instead of only the last.
  bool head_every_prefix = false;
  /// Stop after this many updates; 0 means no cap.
  std::size_t max_steps = 0;

  void validate() const;
};

struct SftLog {
  std::size_t epoch = 0;
  double token_nll = 0.0;  // per record
  double label_nll = 0.0;  // per head example
};

/// Maximizes the log-likelihood of the gold traces and of the gold label at
/// the end of the trace. Throws EmptyBatch on an empty record set.
PolicyParams train_sft(PolicyParams init, const std::vector<TraceRecord>& records,
                       const SftConfig& config, std::vector<SftLog>* log = nullptr);

// ---- probing -----------------------------------------------------------------

struct PsiEstimate {
  std::size_t drift_state = 0;
  std::vector<std::string> labels;
  std::vector<double> psi;
};

/// Label shift caused by swapping trace t for t' under one snapshot, one
/// visual context and one drift state: z(t) - z(t').
PsiEstimate estimate_psi(const PolicyParams& params, const VisualContext& v,
                         std::span<const TokenId> prompt, const ThinkingTrace& t,
                         const ThinkingTrace& t_prime, std::size_t drift_state);

}  // namespace cdrift
