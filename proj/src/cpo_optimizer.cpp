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


#include "cdrift/cpo_optimizer.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::Both: return "both";
    case Ablation::ThinkingOnly: return "thinking";
    case Ablation::PerceptionOnly: return "perception";
    case Ablation::None: return "none";
  }
  return "?";
}

Ablation ablation_from_string(std::string_view text) {
  if (text == "both") return Ablation::Both;
  if (text == "thinking" || text == "thinking_only") return Ablation::ThinkingOnly;
  if (text == "perception" || text == "perception_only") return Ablation::PerceptionOnly;
  if (text == "none") return Ablation::None;
  throw Error(ErrorCode::InvalidConfig, "unknown ablation '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(ErrorCode::InvalidConfig, "beta must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be positive");
  if (window == 0) throw Error(ErrorCode::InvalidConfig, "window must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"beta", c.beta},           {"lr", c.lr},         {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"window", c.window}, {"seed", c.seed},
          {"ablation", to_string(c.ablation)}, {"max_steps", c.max_steps}};
}

json to_json(const EpochLog& l) {
  return {{"epoch", l.epoch},
          {"steps", l.steps},
          {"loss", l.stats.loss},
          {"mean_margin", l.stats.mean_margin},
          {"reward_accuracy", l.stats.reward_accuracy},
          {"pairs", l.stats.pairs}};
}

double reward_margin(const PolicyParams& params, const PolicyParams& ref, const PreferencePair& pair,
                     double beta) {
  const double lc = sequence_logprob(params, pair.visual, pair.prompt, pair.chosen);
  const double lr = sequence_logprob(params, pair.rejected_visual(), pair.prompt, pair.rejected);
  const double rc = sequence_logprob(ref, pair.visual, pair.prompt, pair.chosen);
  const double rr = sequence_logprob(ref, pair.rejected_visual(), pair.prompt, pair.rejected);
  return beta * ((lc - rc) - (lr - rr));
}

LossStats cpo_loss_and_grad(const PolicyParams& params, const PolicyParams& ref,
                            std::span<const PreferencePair> batch, double beta, Matrix& grad) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "preference batch is empty");
  std::vector<RefLogprobs> refs;
  refs.reserve(batch.size());
  for (const auto& p : batch) refs.push_back(reference_logprobs(ref, p));
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return kernels::batch_loss_grad_serial(params, batch, refs, idx, beta, grad);
}

std::vector<PreferencePair> filter_pairs(const std::vector<PreferencePair>& pairs, Ablation ablation) {
  std::vector<PreferencePair> out;
  for (const auto& p : pairs) {
    bool keep = false;
    switch (ablation) {
      case Ablation::Both: keep = p.kind != PairKind::RandomNegative; break;
      case Ablation::ThinkingOnly: keep = p.kind == PairKind::ThinkingCf; break;
      case Ablation::PerceptionOnly: keep = p.kind == PairKind::PerceptionCf; break;
      case Ablation::None: keep = true; break;
    }
    if (keep) out.push_back(p);
  }
  return out;
}

std::vector<std::vector<std::size_t>> window_batches(const std::vector<PreferencePair>& pairs,
                                                     const TrainConfig& config, std::size_t epoch) {
  // context ordinal in stream order
  std::map<std::string, std::size_t, std::less<>> ordinal;
  std::vector<std::size_t> context_of(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [it, _] = ordinal.emplace(pairs[i].context, ordinal.size());
    context_of[i] = it->second;
  }
  const std::size_t windows = (ordinal.size() + config.window - 1) / config.window;
  std::vector<std::vector<std::size_t>> members(windows);
  for (std::size_t i = 0; i < pairs.size(); ++i) members[context_of[i] / config.window].push_back(i);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t w = 0; w < windows; ++w) {
    Rng rng = Rng::stream(config.seed,
                          "cpo:epoch" + std::to_string(epoch) + ":window" + std::to_string(w));
    rng.shuffle(members[w]);
    for (std::size_t start = 0; start < members[w].size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, members[w].size());
      batches.emplace_back(members[w].begin() + static_cast<std::ptrdiff_t>(start),
                           members[w].begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

TrainResult train_cpo(PolicyParams init, const PolicySnapshot& ref,
                      const std::vector<PreferencePair>& pairs, const TrainConfig& config) {
  config.validate();
  init.validate();
  const auto kept = filter_pairs(pairs, config.ablation);
  if (kept.empty())
    throw Error(ErrorCode::NoPairsAfterFilter,
                "no pairs left after the '" + std::string(to_string(config.ablation)) + "' filter");
  for (const auto& p : kept) p.validate();

  std::vector<RefLogprobs> refs(kept.size());
  const auto n = static_cast<std::ptrdiff_t>(kept.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) refs[i] = reference_logprobs(ref.params(), kept[i]);

  TrainResult result{std::move(init), {}};
  Matrix grad;
  std::size_t steps = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.max_steps && steps == config.max_steps) break;
    EpochLog log;
    log.epoch = epoch;
    for (const auto& batch : window_batches(kept, config, epoch)) {
      if (config.max_steps && steps == config.max_steps) break;
      ++steps;
      const auto stats =
          config.parallel
              ? kernels::batch_loss_grad_parallel(result.params, kept, refs, batch, config.beta, grad)
              : kernels::batch_loss_grad_serial(result.params, kept, refs, batch, config.beta, grad);
      const double w = static_cast<double>(stats.pairs);
      log.stats.loss += stats.loss * w;
      log.stats.mean_margin += stats.mean_margin * w;
      log.stats.reward_accuracy += stats.reward_accuracy * w;
      log.stats.pairs += stats.pairs;
      ++log.steps;
      auto& weights = result.params.token_weights.data;
      for (std::size_t k = 0; k < weights.size(); ++k) weights[k] -= config.lr * grad.data[k];
    }
    const double total = static_cast<double>(log.stats.pairs);
    log.stats.loss /= total;
    log.stats.mean_margin /= total;
    log.stats.reward_accuracy /= total;
    result.log.push_back(log);
  }
  return result;
}

// ---- maximum likelihood -------------------------------------------------------

void SftConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be positive");
}

PolicyParams train_sft(PolicyParams params, const std::vector<TraceRecord>& records,
                       const SftConfig& config, std::vector<SftLog>* log) {
  config.validate();
  params.validate();
  if (records.empty()) throw Error(ErrorCode::EmptyBatch, "no records to fit");
  std::vector<std::size_t> labels;
  for (const auto& r : records) labels.push_back(params.label_index(r.gold_label));

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix token_grad(params.token_weights.rows, params.token_weights.cols);
  Matrix head_grad(params.head_weights.rows, params.head_weights.cols);
  std::size_t steps = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.max_steps && steps == config.max_steps) break;
    Rng rng = Rng::stream(config.seed, "sft:epoch" + std::to_string(epoch));
    rng.shuffle(order);
    SftLog entry{epoch, 0.0, 0.0};
    std::size_t head_examples = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      if (config.max_steps && steps == config.max_steps) break;
      ++steps;
      const std::size_t end = std::min(start + config.batch_size, order.size());
      const double scale = 1.0 / static_cast<double>(end - start);
      token_grad.set_zero();
      head_grad.set_zero();
      for (std::size_t b = start; b < end; ++b) {
        const auto& r = records[order[b]];
        if (config.train_tokens)
          entry.token_nll -= accumulate_sequence_logprob_grad(params, r.visual, r.prompt, r.trace,
                                                              -scale, token_grad);
        if (!config.train_head) continue;
        const auto& tokens = r.trace.tokens();
        if (config.head_every_prefix) {
          const std::size_t first = r.trace.span_begin() + 1;
          const double share = scale / static_cast<double>(tokens.size() + 1 - first);
          for (std::size_t len = first; len <= tokens.size(); ++len) {
            entry.label_nll += accumulate_label_nll_grad(
                params, r.visual, r.prompt, std::span<const TokenId>(tokens.data(), len),
                labels[order[b]], share, head_grad);
            ++head_examples;
          }
        } else {
          entry.label_nll += accumulate_label_nll_grad(params, r.visual, r.prompt, tokens,
                                                       labels[order[b]], scale, head_grad);
          ++head_examples;
        }
      }
      for (std::size_t k = 0; k < token_grad.data.size(); ++k)
        params.token_weights.data[k] -= config.lr * token_grad.data[k];
      for (std::size_t k = 0; k < head_grad.data.size(); ++k)
        params.head_weights.data[k] -= config.lr * head_grad.data[k];
    }
    entry.token_nll /= static_cast<double>(records.size());
    if (head_examples) entry.label_nll /= static_cast<double>(head_examples);
    if (log) log->push_back(entry);
  }
  return params;
}

PsiEstimate estimate_psi(const PolicyParams& params, const VisualContext& v,
                         std::span<const TokenId> prompt, const ThinkingTrace& t,
                         const ThinkingTrace& t_prime, std::size_t drift_state) {
  const auto a = predict_label(params, v, prompt, t.tokens());
  const auto b = predict_label(params, v, prompt, t_prime.tokens());
  PsiEstimate out{drift_state, params.labels, std::vector<double>(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) out.psi[i] = a[i] - b[i];
  return out;
}

}  // namespace cdrift
