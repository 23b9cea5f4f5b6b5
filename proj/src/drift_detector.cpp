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


#include "cdrift/drift_detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

std::string_view to_string(Divergence d) {
  return d == Divergence::TotalVariation ? "tv" : "symmetric_kl";
}

std::string_view to_string(Channel c) { return c == Channel::Thinking ? "thinking" : "perception"; }

Divergence divergence_from_string(std::string_view text) {
  if (text == "tv") return Divergence::TotalVariation;
  if (text == "symmetric_kl" || text == "kl") return Divergence::SymmetricKL;
  throw Error(ErrorCode::InvalidConfig, "unknown divergence '" + std::string(text) + "'");
}

void DriftConfig::validate() const {
  if (!(threshold >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "drift threshold must be non-negative");
  if (window < 1) throw Error(ErrorCode::InvalidConfig, "drift window must be at least 1");
  if (divergence == Divergence::SymmetricKL && (!(smoothing > 0.0) || !std::isfinite(smoothing)))
    throw Error(ErrorCode::InvalidConfig, "KL smoothing must be positive");
}

json to_json(const DriftConfig& c) {
  return {{"divergence", to_string(c.divergence)},
          {"threshold", c.threshold},
          {"window", c.window},
          {"sink_mask", c.sink_mask},
          {"smoothing", c.smoothing}};
}

DriftConfig drift_config_from_json(const json& doc) {
  DriftConfig c;
  try {
    if (doc.contains("divergence"))
      c.divergence = divergence_from_string(doc.at("divergence").get<std::string>());
    if (doc.contains("threshold")) c.threshold = doc.at("threshold").get<double>();
    if (doc.contains("window")) c.window = doc.at("window").get<std::size_t>();
    if (doc.contains("sink_mask")) c.sink_mask = doc.at("sink_mask").get<std::size_t>();
    if (doc.contains("smoothing")) c.smoothing = doc.at("smoothing").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("drift config: ") + e.what());
  }
  c.validate();
  return c;
}

json DriftReport::to_json() const {
  json events_json = json::array();
  for (const auto& e : events)
    events_json.push_back(
        {{"position", e.position}, {"channel", to_string(e.channel)}, {"magnitude", e.magnitude}});
  return {{"record_id", record_id},
          {"config", cdrift::to_json(config)},
          {"thinking", thinking},
          {"perception", perception},
          {"events", events_json}};
}

double divergence(std::span<const double> p, std::span<const double> q, const DriftConfig& config) {
  if (p.size() != q.size())
    throw Error(ErrorCode::LengthMismatch, "distributions have different support sizes");
  double acc = 0.0;
  if (config.divergence == Divergence::TotalVariation) {
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
  }
  const double eps = config.smoothing;
  const double norm = 1.0 + eps * static_cast<double>(p.size());
  // (p - q)(log p - log q) is unchanged by swapping p and q, bit for bit
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = (p[i] + eps) / norm;
    const double b = (q[i] + eps) / norm;
    acc += (a - b) * (std::log(a) - std::log(b));
  }
  return acc;
}

std::vector<double> divergence_series(const std::vector<std::vector<double>>& rows,
                                      const DriftConfig& config) {
  if (rows.size() < 2)
    throw Error(ErrorCode::TooShort, "a divergence series needs at least two states");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != rows[0].size())
      throw Error(ErrorCode::LengthMismatch, "state " + std::to_string(k) + " has a different width");
    if (!is_distribution(rows[k]))
      throw Error(ErrorCode::NotNormalized, "state " + std::to_string(k) + " is not a distribution");
  }
  std::vector<double> out(rows.size() - 1);
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) out[k] = divergence(rows[k], rows[k + 1], config);
  return out;
}

std::vector<double> perception_series(const std::vector<std::vector<double>>& frames,
                                      const DriftConfig& config) {
  std::vector<std::vector<double>> normalized;
  normalized.reserve(frames.size());
  for (const auto& f : frames)
    normalized.push_back(normalize_attention(AttentionFrame{f}, config.sink_mask).weights);
  return divergence_series(normalized, config);
}

std::vector<DriftEvent> detect_events(std::span<const double> series, const DriftConfig& config,
                                      Channel channel) {
  std::vector<DriftEvent> events;
  std::size_t k = 0;
  while (k < series.size()) {
    if (!(series[k] > config.threshold)) {
      ++k;
      continue;
    }
    std::size_t peak = k;
    while (k < series.size() && series[k] > config.threshold) {
      if (series[k] > series[peak]) peak = k;
      ++k;
    }
    events.push_back({peak, channel, series[peak]});
  }
  return events;
}

DriftReport drift_report(const TraceRecord& record, const DriftConfig& config) {
  config.validate();
  DriftReport report;
  report.record_id = record.record_id;
  report.config = config;
  if (!record.z && !record.attention)
    throw Error(ErrorCode::TooShort, "record " + record.record_id + " carries no states or frames");
  if (record.z) report.thinking = divergence_series(*record.z, config);
  if (record.attention) report.perception = perception_series(*record.attention, config);
  report.events = detect_events(report.thinking, config, Channel::Thinking);
  auto perception = detect_events(report.perception, config, Channel::Perception);
  report.events.insert(report.events.end(), perception.begin(), perception.end());
  std::stable_sort(report.events.begin(), report.events.end(),
                   [](const DriftEvent& a, const DriftEvent& b) { return a.position < b.position; });
  return report;
}

double calibrate_threshold(const std::vector<std::vector<double>>& clean_series, double factor) {
  double peak = 0.0;
  for (const auto& s : clean_series)
    for (double x : s) peak = std::max(peak, x);
  return factor * peak;
}

// ---- probe ------------------------------------------------------------------

json ProbeReport::to_json() const {
  return {{"labels", labels},
          {"original", original},
          {"perturbed", perturbed},
          {"delta", delta},
          {"perturbed_trace", perturbed_trace.tokens()},
          {"perception", perception},
          {"unmatched_frames", unmatched_frames}};
}

std::string ProbeReport::delta_table() const {
  std::ostringstream out;
  out.precision(17);
  out << "label\toriginal\tperturbed\tdelta\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << labels[i] << '\t' << original[i] << '\t' << perturbed[i] << '\t' << delta[i] << '\n';
  return out.str();
}

ThinkingTrace splice_mention(const ThinkingTrace& trace, const MentionMatcher& matcher,
                             const ProbeSubstitution& substitution) {
  const auto& m = substitution.mention;
  const auto& tokens = trace.tokens();
  if (m.attribute >= matcher.graph().attributes().size() ||
      substitution.replacement >= matcher.graph().attributes().size())
    throw Error(ErrorCode::SpanMismatch, "attribute index out of range");
  const auto& name = matcher.name_tokens(m.attribute);
  if (m.start < trace.span_begin() || m.start + m.length > trace.span_end() ||
      name.size() != m.length || !std::equal(name.begin(), name.end(), tokens.begin() + m.start))
    throw Error(ErrorCode::SpanMismatch, "mention does not match the trace at token " +
                                             std::to_string(m.start));
  const auto& replacement = matcher.name_tokens(substitution.replacement);
  if (replacement.empty())
    throw Error(ErrorCode::UnknownToken,
                "replacement '" + matcher.graph().attributes()[substitution.replacement].name +
                    "' is out of vocabulary");
  std::vector<TokenId> out(tokens.begin(), tokens.begin() + m.start);
  out.insert(out.end(), replacement.begin(), replacement.end());
  out.insert(out.end(), tokens.begin() + m.start + m.length, tokens.end());
  return ThinkingTrace::from_tokens(std::move(out), matcher.vocabulary().markers(),
                                    !trace.terminated());
}

std::vector<std::vector<double>> policy_attention_frames(const PolicyParams& params,
                                                         const VisualContext& v,
                                                         std::span<const TokenId> prompt,
                                                         const ThinkingTrace& trace) {
  (void)prompt;
  const auto& fm = params.features;
  const auto visual = encode_visual(fm, v);
  if (visual.empty()) throw Error(ErrorCode::DegenerateFrame, "visual context has no attributes");
  const std::size_t base = fm.window * fm.vocab_size;
  std::vector<std::vector<double>> frames;
  for (std::size_t j = trace.span_begin(); j < trace.span_end(); ++j) {
    const TokenId t = trace.tokens()[j];
    if (t >= fm.vocab_size) throw Error(ErrorCode::UnknownToken, "token outside the vocabulary");
    std::vector<double> logits;
    for (std::uint32_t a : visual) logits.push_back(params.token_weights(t, base + a));
    softmax_inplace(logits);
    std::vector<double> frame(fm.attribute_ids.size(), 0.0);
    for (std::size_t i = 0; i < visual.size(); ++i) frame[visual[i]] = logits[i];
    frames.push_back(std::move(frame));
  }
  return frames;
}

ProbeReport counterfactual_probe(const PolicyParams& params, const VisualContext& v,
                                 std::span<const TokenId> prompt, const ThinkingTrace& trace,
                                 const MentionMatcher& matcher,
                                 const ProbeSubstitution& substitution,
                                 const DriftConfig& config) {
  ProbeReport r;
  r.perturbed_trace = splice_mention(trace, matcher, substitution);
  r.labels = params.labels;
  r.original = predict_label(params, v, prompt, trace.tokens());
  r.perturbed = predict_label(params, v, prompt, r.perturbed_trace.tokens());
  r.delta.resize(r.labels.size());
  for (std::size_t i = 0; i < r.labels.size(); ++i) r.delta[i] = r.perturbed[i] - r.original[i];

  if (!v.attributes.empty()) {
    const auto before = policy_attention_frames(params, v, prompt, trace);
    const auto after = policy_attention_frames(params, v, prompt, r.perturbed_trace);
    const std::size_t first = substitution.mention.start - trace.span_begin();
    const std::size_t shared = std::min(before.size(), after.size());
    for (std::size_t k = first; k < shared; ++k)
      r.perception.push_back(divergence(before[k], after[k], config));
    r.unmatched_frames = std::max(before.size(), after.size()) - shared;
  }
  return r;
}

}  // namespace cdrift
