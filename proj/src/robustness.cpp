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


#include "cdrift/robustness.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "cdrift/error.hpp"

namespace cdrift {

void RobustnessConfig::validate() const {
  if (ratios.empty() || seeds.empty())
    throw Error(ErrorCode::InvalidConfig, "robustness evaluation needs ratios and seeds");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidConfig, "ratios must lie in [0, 1]");
}

Interference interfered_input(const TraceRecord& record, const MentionMatcher& matcher,
                              double ratio, std::uint64_t seed, InterferenceTarget target) {
  char key[64];
  std::snprintf(key, sizeof key, "interfere:%.17g:", ratio);
  Rng rng = Rng::stream(seed, key + record.record_id);
  return inject_interference(record, matcher, ratio, rng, target);
}

std::size_t robust_prediction(const PolicyParams& params, const TraceRecord& input,
                              std::size_t continuation, InterferenceTarget target) {
  const auto& markers = params.features.markers;
  std::vector<TokenId> prefix;
  if (target == InterferenceTarget::ThinkPrefix) {
    prefix.assign(input.trace.tokens().begin(),
                  input.trace.tokens().begin() + static_cast<std::ptrdiff_t>(input.trace.span_end()));
  } else {
    prefix.push_back(markers.open);
  }
  for (std::size_t step = 0; step < continuation; ++step) {
    auto probs = next_token_probs(params, input.visual, input.prompt, prefix);
    probs[markers.open] = -1.0;
    const auto next = static_cast<TokenId>(argmax_lowest(probs));
    if (next == markers.close) break;
    prefix.push_back(next);
  }
  return argmax_lowest(predict_label(params, input.visual, input.prompt, prefix));
}

std::vector<RobustnessCell> eval_robustness(const std::vector<NamedPolicy>& policies,
                                            const std::vector<TraceRecord>& records,
                                            const MentionMatcher& matcher,
                                            const RobustnessConfig& config,
                                            std::vector<Prediction>* predictions) {
  config.validate();
  std::vector<const TraceRecord*> usable;
  for (const auto& r : records)
    if (!matcher.extract(r.trace).empty()) usable.push_back(&r);

  const std::size_t R = config.ratios.size();
  const std::size_t S = config.seeds.size();
  const std::size_t N = usable.size();

  // interfered inputs are shared by every policy
  std::vector<TraceRecord> inputs(R * S * N);
  std::vector<std::optional<Error>> errors(inputs.size());
  const auto total_inputs = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < total_inputs; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    const std::size_t r = u / (S * N), s = (u / N) % S, n = u % N;
    try {
      inputs[u] = interfered_input(*usable[n], matcher, config.ratios[r], config.seeds[s],
                                   config.target).record;
    } catch (const Error& e) {
      errors[u] = e;
    }
  }
  for (auto& e : errors)
    if (e) throw *e;

  const std::size_t P = policies.size();
  std::vector<std::size_t> predicted(P * inputs.size());
  std::vector<std::optional<Error>> pred_errors(predicted.size());
  const auto total_preds = static_cast<std::ptrdiff_t>(predicted.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < total_preds; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    try {
      predicted[u] = robust_prediction(policies[u / inputs.size()].params, inputs[u % inputs.size()],
                                       config.continuation, config.target);
    } catch (const Error& e) {
      pred_errors[u] = e;
    }
  }
  for (auto& e : pred_errors)
    if (e) throw *e;

  std::vector<RobustnessCell> cells;
  for (std::size_t p = 0; p < P; ++p) {
    const auto& labels = policies[p].params.labels;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t s = 0; s < S; ++s) {
        RobustnessCell cell{policies[p].name, config.ratios[r], config.seeds[s], 0, N};
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t idx = p * inputs.size() + (r * S + s) * N + n;
          const std::string& label = labels[predicted[idx]];
          if (label == usable[n]->gold_label) ++cell.correct;
          if (predictions)
            predictions->push_back({policies[p].name, config.ratios[r], config.seeds[s],
                                    usable[n]->record_id, label, usable[n]->gold_label});
        }
        cells.push_back(cell);
      }
  }
  return cells;
}

std::string robustness_table(const std::vector<RobustnessCell>& cells) {
  std::ostringstream out;
  out << "policy\tratio\tseed\tcorrect\ttotal\taccuracy\n";
  out.precision(17);
  for (const auto& c : cells)
    out << c.policy << '\t' << c.ratio << '\t' << c.seed << '\t' << c.correct << '\t' << c.total
        << '\t' << c.accuracy() << '\n';
  return out.str();
}

double accuracy_drop(const std::vector<RobustnessCell>& cells, const std::string& policy,
                     double from, double to) {
  double sum = 0.0;
  std::size_t seeds = 0;
  for (const auto& a : cells) {
    if (a.policy != policy || a.ratio != from) continue;
    for (const auto& b : cells) {
      if (b.policy != policy || b.ratio != to || b.seed != a.seed) continue;
      sum += a.accuracy() - b.accuracy();
      ++seeds;
    }
  }
  if (seeds == 0) throw Error(ErrorCode::InvalidConfig, "no cells for policy " + policy);
  return sum / static_cast<double>(seeds);
}

}  // namespace cdrift
