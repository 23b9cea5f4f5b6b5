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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrift/toy_policy.hpp"
#include "cdrift/trace_model.hpp"
#include "json.hpp"

namespace cdrift {

enum class Divergence { TotalVariation, SymmetricKL };
enum class Channel { Thinking, Perception };

std::string_view to_string(Divergence d);
std::string_view to_string(Channel c);
Divergence divergence_from_string(std::string_view text);

struct DriftConfig {
  Divergence divergence = Divergence::TotalVariation;
  double threshold = 0.1;
  std::size_t window = 3;
  std::size_t sink_mask = kDefaultSinkMask;
  double smoothing = 1e-9;

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json to_json(const DriftConfig& config);
DriftConfig drift_config_from_json(const nlohmann::json& doc);

struct DriftEvent {
  std::size_t position;
  Channel channel;
  double magnitude;
  bool operator==(const DriftEvent&) const = default;
};

struct DriftReport {
  std::string record_id;
  DriftConfig config;
  std::vector<double> thinking;
  std::vector<double> perception;
  std::vector<DriftEvent> events;  // sorted by position, thinking before perception

  nlohmann::json to_json() const;
};

/// d(p, q) under the configured divergence. Total variation is
/// 0.5 * sum |p - q|; symmetric KL smooths every bin by `smoothing`,
/// renormalizes, and sums (p - q) * (log p - log q).
double divergence(std::span<const double> p, std::span<const double> q, const DriftConfig& config);

/// Entry k is divergence(rows[k], rows[k + 1]). Rows must already be
/// distributions. Throws TooShort, NotNormalized, LengthMismatch.
std::vector<double> divergence_series(const std::vector<std::vector<double>>& rows,
                                      const DriftConfig& config);
/// Applies the sink mask to every frame before measuring.
std::vector<double> perception_series(const std::vector<std::vector<double>>& frames,
                                      const DriftConfig& config);

/// One event per maximal run of entries strictly above the threshold, placed
/// at the run's peak (earliest index on ties).
std::vector<DriftEvent> detect_events(std::span<const double> series, const DriftConfig& config,
                                      Channel channel);

DriftReport drift_report(const TraceRecord& record, const DriftConfig& config);

/// Twice the largest divergence seen across the given clean series.
double calibrate_threshold(const std::vector<std::vector<double>>& clean_series,
                           double factor = 2.0);

// ---- counterfactual probe -------------------------------------------------

struct ProbeSubstitution {
  Mention mention;
  std::size_t replacement;  // attribute index
};

struct ProbeReport {
  std::vector<std::string> labels;
  std::vector<double> original;
  std::vector<double> perturbed;
  std::vector<double> delta;  // perturbed - original
  ThinkingTrace perturbed_trace;
  /// Step-aligned frame divergences starting at the first perturbed token.
  std::vector<double> perception;
  std::size_t unmatched_frames = 0;

  nlohmann::json to_json() const;
  /// label, original, perturbed, delta; tab separated with a header row.
  std::string delta_table() const;
};

/// Replaces one mention's tokens with the replacement attribute's name.
/// Throws SpanMismatch when the mention does not sit at its recorded span
/// and UnknownToken when the replacement name is out of vocabulary.
ThinkingTrace splice_mention(const ThinkingTrace& trace, const MentionMatcher& matcher,
                             const ProbeSubstitution& substitution);

ProbeReport counterfactual_probe(const PolicyParams& params, const VisualContext& v,
                                 std::span<const TokenId> prompt, const ThinkingTrace& trace,
                                 const MentionMatcher& matcher,
                                 const ProbeSubstitution& substitution,
                                 const DriftConfig& config);

/// Per-step saliency of the policy over v's attribute slots: entry a of the
/// frame for step j is proportional to exp(weight of attribute a toward the
/// emitted token) for attributes present in v, zero elsewhere.
std::vector<std::vector<double>> policy_attention_frames(const PolicyParams& params,
                                                         const VisualContext& v,
                                                         std::span<const TokenId> prompt,
                                                         const ThinkingTrace& trace);

}  // namespace cdrift
