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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrift/concept_graph.hpp"
#include "cdrift/rng.hpp"
#include "cdrift/toy_policy.hpp"
#include "cdrift/trace_model.hpp"
#include "json.hpp"

namespace cdrift {

struct CounterfactualSpec {
  std::size_t count = 4;             // N
  std::size_t max_substitutions = 1;
  std::optional<std::string> category;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Substitution {
  std::size_t mention;      // index into the trace's mention list
  std::size_t replacement;  // attribute index
  bool operator==(const Substitution&) const = default;
};

struct ThinkingCounterfactual {
  ThinkingTrace trace;
  std::vector<Substitution> edits;  // ascending by mention
};

struct SynthesisResult {
  std::vector<ThinkingCounterfactual> candidates;
  /// Fewer than `count` valid candidates exist for this record.
  bool exhausted = false;
};

/// Applies edits (distinct mentions) to a trace. Throws UnknownToken when a
/// replacement name is out of vocabulary.
ThinkingTrace apply_substitutions(const ThinkingTrace& trace, const MentionMatcher& matcher,
                                  const std::vector<Mention>& mentions,
                                  std::vector<Substitution> edits);

/// x and y are mutually exclusive when they share a category, some entity
/// Associated with x Excludes y, and some entity Associated with y Excludes x.
bool mutually_exclusive(const ConceptGraph& graph, std::size_t x, std::size_t y);
/// No two mentioned attributes are mutually exclusive.
bool plausible(const ConceptGraph& graph, std::span<const std::size_t> attributes);
/// The mentioned attributes no longer support the gold entity: one of them is
/// Excluded by it, or none of them is Associated with it.
bool label_flip_check(const ConceptGraph& graph, std::span<const std::size_t> attributes,
                      std::size_t gold_entity);

/// Hard negative thinking traces for one record. Single substitutions are
/// enumerated in (mention, replacement id) order and kept when plausible and
/// label-flipping; when that yields fewer than `count`, seeded multi-mention
/// combinations fill the rest. Throws NoMentions, UnknownEntity, UnknownToken.
SynthesisResult synthesize_thinking_cf(const TraceRecord& record, const MentionMatcher& matcher,
                                       const CounterfactualSpec& spec);

/// Baseline negative: one mention replaced by a uniformly drawn different
/// in-vocabulary attribute, ignoring the graph. Throws NoMentions.
ThinkingTrace random_negative(const ThinkingTrace& trace, const MentionMatcher& matcher, Rng& rng);

// ---- perception counterfactuals ------------------------------------------

class VisualPool {
 public:
  VisualPool() = default;
  /// Throws DuplicateId.
  explicit VisualPool(std::vector<VisualContext> members);
  const std::vector<VisualContext>& members() const { return members_; }
  const VisualContext* find(std::string_view id) const;
  bool empty() const { return members_.empty(); }

 private:
  std::vector<VisualContext> members_;  // sorted by id
};

/// Jaccard distance between attribute bags; two empty bags are at distance 0.
double jaccard_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// The k nearest pool members to v by Jaccard distance, ties by id, skipping
/// v itself and members whose bag equals v's. Throws EmptyPool.
std::vector<VisualContext> retrieve_visual_candidates(const VisualPool& pool,
                                                      const VisualContext& v, std::size_t k);

struct ScoredVisual {
  std::string id;
  double score;
};

struct HardNegative {
  VisualContext distractor;
  double margin;  // score(distractor) - score(v_init), always > 0
};

struct InverseMatch {
  std::vector<ScoredVisual> ranking;  // score descending, ties by id
  std::optional<HardNegative> hard_negative;
};

/// Scores the fixed trace under v_init and every distractor. A distractor
/// that outranks v_init with a positive margin is a hard negative. Throws
/// DuplicateId, EmptyPool.
InverseMatch inverse_match(const PolicyParams& params, const ThinkingTrace& trace,
                           std::span<const TokenId> prompt, const VisualContext& v_init,
                           std::span<const VisualContext> distractors);

// ---- preference pairs ----------------------------------------------------

enum class PairKind { ThinkingCf, PerceptionCf, RandomNegative };
std::string_view to_string(PairKind kind);
PairKind pair_kind_from_string(std::string_view text);

/// Shared context (v, l) with a preferred and a dispreferred continuation.
/// For perception pairs the rejected side is the chosen trace re-conditioned
/// on `distractor`.
struct PreferencePair {
  std::string context;  // record id
  VisualContext visual;
  std::vector<TokenId> prompt;
  ThinkingTrace chosen;
  ThinkingTrace rejected;
  std::optional<VisualContext> distractor;
  PairKind kind = PairKind::ThinkingCf;
  std::optional<double> margin;

  const VisualContext& rejected_visual() const { return distractor ? *distractor : visual; }
  /// Throws InvariantViolation.
  void validate() const;
};

PreferencePair thinking_pair(const TraceRecord& record, ThinkingTrace rejected,
                             PairKind kind = PairKind::ThinkingCf);
PreferencePair perception_pair(const TraceRecord& record, const HardNegative& negative);

inline constexpr std::string_view kPairFormat = "cdrift-pairs";
inline constexpr int kPairFormatVersion = 1;

/// JSONL behind a header line {"format": "cdrift-pairs", "version": 1}, then
/// one {"context", "chosen", "rejected", "kind", "margin"?} per pair. Thinking
/// pairs store the rejected token ids; perception pairs store the
/// distractor's visual id.
std::string serialize_pairs(const std::vector<PreferencePair>& pairs);
/// Resolves contexts and distractors against the record stream. Throws
/// ParseError, MissingReference, UnknownToken.
std::vector<PreferencePair> parse_pairs(std::string_view text,
                                        const std::vector<TraceRecord>& records,
                                        const Vocabulary& vocab);

// ---- batch builders --------------------------------------------------------

struct SynthesisSummary {
  std::size_t records = 0;
  std::size_t pairs = 0;
  std::size_t exhausted = 0;
};

std::vector<PreferencePair> build_thinking_pairs(const std::vector<TraceRecord>& records,
                                                 const MentionMatcher& matcher,
                                                 const CounterfactualSpec& spec,
                                                 SynthesisSummary* summary = nullptr);

struct MiningEntry {
  std::string record_id;
  InverseMatch match;
};

/// Inverse-matching over the k nearest neighbours of each record's visual
/// context, drawn from the records' own visual contexts.
std::vector<PreferencePair> mine_perception_pairs(const PolicyParams& params,
                                                  const std::vector<TraceRecord>& records,
                                                  std::size_t k,
                                                  std::vector<MiningEntry>* report = nullptr);

std::vector<PreferencePair> build_random_pairs(const std::vector<TraceRecord>& records,
                                               const MentionMatcher& matcher, std::size_t per_record,
                                               std::uint64_t seed);

}  // namespace cdrift
