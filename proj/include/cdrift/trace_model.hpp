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
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdrift/concept_graph.hpp"
#include "cdrift/vocabulary.hpp"
#include "json.hpp"

namespace cdrift {

inline constexpr double kUnitSumTolerance = 1e-9;
inline constexpr std::size_t kDefaultSinkMask = 10;

struct VisualContext {
  std::string id;
  std::vector<std::string> attributes;  // grounded perception evidence, an attribute bag
  std::optional<std::vector<double>> feature;
  bool operator==(const VisualContext&) const = default;
};

/// A think-delimited token sequence. The first token is always think-open;
/// think-close, when present, is the last token. The think span is the run of
/// tokens strictly between the markers (or everything after think-open for a
/// truncated trace); it is what the policy scores and what per-step states
/// and attention frames align with.
class ThinkingTrace {
 public:
  ThinkingTrace() = default;

  static ThinkingTrace from_tokens(std::vector<TokenId> tokens, ThinkMarkers markers,
                                   bool allow_truncated = false);
  /// `<open> body... <close>`
  static ThinkingTrace wrap(std::span<const TokenId> body, ThinkMarkers markers);

  const std::vector<TokenId>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool terminated() const { return terminated_; }
  std::size_t span_begin() const { return 1; }
  std::size_t span_end() const { return terminated_ ? tokens_.size() - 1 : tokens_.size(); }
  std::size_t span_size() const { return span_end() - span_begin(); }
  std::span<const TokenId> span() const {
    return std::span<const TokenId>(tokens_).subspan(span_begin(), span_size());
  }

  bool operator==(const ThinkingTrace&) const = default;

 private:
  std::vector<TokenId> tokens_;
  bool terminated_ = false;
};

struct AttentionFrame {
  std::vector<double> weights;
  bool operator==(const AttentionFrame&) const = default;
};

struct TraceRecord {
  std::string record_id;
  VisualContext visual;
  std::vector<TokenId> prompt;
  ThinkingTrace trace;
  std::optional<std::vector<std::vector<double>>> z;          // one row per think-span token
  std::optional<std::vector<std::vector<double>>> attention;  // one frame per think-span token
  std::string gold_label;
  bool operator==(const TraceRecord&) const = default;
};

/// Cognitive state after consuming the think-span token at `position - 1`.
struct CognitiveState {
  std::size_t position;
  std::span<const TokenId> prefix;
  std::span<const double> z;
};

std::vector<CognitiveState> cognitive_states(const TraceRecord& record);

// ---- record stream -------------------------------------------------------

/// One record per line. Validates against the vocabulary, and against the
/// graph when one is given. Errors carry the 1-based line number.
TraceRecord parse_record(std::string_view line, const Vocabulary& vocab,
                         const ConceptGraph* graph = nullptr, std::size_t line_number = 0);
std::vector<TraceRecord> parse_records(std::istream& in, const Vocabulary& vocab,
                                       const ConceptGraph* graph = nullptr);
std::vector<TraceRecord> parse_records(std::string_view text, const Vocabulary& vocab,
                                       const ConceptGraph* graph = nullptr);

nlohmann::json record_to_json(const TraceRecord& record);
std::string serialize_record(const TraceRecord& record);
std::string serialize_records(const std::vector<TraceRecord>& records);

// ---- attribute mentions --------------------------------------------------

struct Mention {
  std::size_t attribute;  // index into ConceptGraph::attributes()
  std::size_t start;      // absolute token index within the trace
  std::size_t length;
  bool operator==(const Mention&) const = default;
};

/// Locates attribute names inside think spans: greedy, leftmost-first,
/// longest match at each position; equal-length matches go to the lowest
/// attribute id. Attributes whose names contain out-of-vocabulary words can
/// never match.
class MentionMatcher {
 public:
  MentionMatcher(const ConceptGraph& graph, const Vocabulary& vocab);

  std::vector<Mention> extract(const ThinkingTrace& trace) const;

  const ConceptGraph& graph() const { return *graph_; }
  const Vocabulary& vocabulary() const { return *vocab_; }
  bool in_vocabulary(std::size_t attribute) const { return !names_[attribute].empty(); }
  /// Tokenized attribute name; empty when out of vocabulary.
  const std::vector<TokenId>& name_tokens(std::size_t attribute) const {
    return names_[attribute];
  }

 private:
  const ConceptGraph* graph_;
  const Vocabulary* vocab_;
  std::vector<std::vector<TokenId>> names_;
  // attributes ordered by (first token, length desc, attribute index)
  std::vector<std::size_t> by_first_token_;
  std::vector<std::size_t> first_token_offset_;  // vocab.size() + 1 offsets
};

std::vector<Mention> extract_attribute_mentions(const ThinkingTrace& trace,
                                                const ConceptGraph& graph,
                                                const Vocabulary& vocab);

// ---- attention -----------------------------------------------------------

/// Zeroes the first `sink_mask` weights and rescales the rest to unit sum.
/// Throws BadMask when sink_mask >= length and DegenerateFrame when no mass
/// is left outside the mask.
AttentionFrame normalize_attention(const AttentionFrame& frame,
                                   std::size_t sink_mask = kDefaultSinkMask);

/// True when every entry is finite and non-negative and the sum is within
/// kUnitSumTolerance of one.
bool is_distribution(std::span<const double> values);

}  // namespace cdrift
