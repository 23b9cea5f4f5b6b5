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


#include "cdrift/counterfactual_engine.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "cdrift/error.hpp"
#include "cdrift/kernels.hpp"

namespace cdrift {

using nlohmann::json;

void CounterfactualSpec::validate() const {
  if (max_substitutions == 0)
    throw Error(ErrorCode::InvalidConfig, "max_substitutions must be positive");
}

ThinkingTrace apply_substitutions(const ThinkingTrace& trace, const MentionMatcher& matcher,
                                  const std::vector<Mention>& mentions,
                                  std::vector<Substitution> edits) {
  std::sort(edits.begin(), edits.end(),
            [](const Substitution& a, const Substitution& b) { return a.mention < b.mention; });
  const auto& tokens = trace.tokens();
  std::vector<TokenId> out;
  std::size_t cursor = 0;
  for (std::size_t e = 0; e < edits.size(); ++e) {
    if (edits[e].mention >= mentions.size() || (e > 0 && edits[e].mention == edits[e - 1].mention))
      throw Error(ErrorCode::InvariantViolation, "edits must name distinct, existing mentions");
    const Mention& m = mentions[edits[e].mention];
    const auto& name = matcher.name_tokens(edits[e].replacement);
    if (name.empty())
      throw Error(ErrorCode::UnknownToken,
                  "replacement '" + matcher.graph().attributes()[edits[e].replacement].name +
                      "' is out of vocabulary");
    out.insert(out.end(), tokens.begin() + cursor, tokens.begin() + m.start);
    out.insert(out.end(), name.begin(), name.end());
    cursor = m.start + m.length;
  }
  out.insert(out.end(), tokens.begin() + cursor, tokens.end());
  return ThinkingTrace::from_tokens(std::move(out), matcher.vocabulary().markers(),
                                    !trace.terminated());
}

bool mutually_exclusive(const ConceptGraph& graph, std::size_t x, std::size_t y) {
  if (graph.attributes()[x].category != graph.attributes()[y].category) return false;
  bool x_excludes_y = false;
  bool y_excludes_x = false;
  for (std::size_t e = 0; e < graph.entities().size(); ++e) {
    const auto rx = graph.relation_at(e, x);
    const auto ry = graph.relation_at(e, y);
    if (rx == RelationKind::Association && ry == RelationKind::Exclusion) x_excludes_y = true;
    if (ry == RelationKind::Association && rx == RelationKind::Exclusion) y_excludes_x = true;
  }
  return x_excludes_y && y_excludes_x;
}

bool plausible(const ConceptGraph& graph, std::span<const std::size_t> attributes) {
  for (std::size_t i = 0; i < attributes.size(); ++i)
    for (std::size_t j = i + 1; j < attributes.size(); ++j)
      if (attributes[i] != attributes[j] && mutually_exclusive(graph, attributes[i], attributes[j]))
        return false;
  return true;
}

bool label_flip_check(const ConceptGraph& graph, std::span<const std::size_t> attributes,
                      std::size_t gold_entity) {
  bool supported = false;
  for (std::size_t a : attributes) {
    const auto r = graph.relation_at(gold_entity, a);
    if (r == RelationKind::Exclusion) return true;
    if (r == RelationKind::Association) supported = true;
  }
  return !supported;
}

SynthesisResult synthesize_thinking_cf(const TraceRecord& record, const MentionMatcher& matcher,
                                       const CounterfactualSpec& spec) {
  spec.validate();
  if (spec.count == 0) return {};
  const ConceptGraph& graph = matcher.graph();
  const std::size_t gold = graph.require_entity(record.gold_label);
  const auto mentions = matcher.extract(record.trace);
  if (mentions.empty())
    throw Error(ErrorCode::NoMentions, "record " + record.record_id + " mentions no attribute");

  std::vector<std::size_t> attrs;
  for (const auto& m : mentions) attrs.push_back(m.attribute);

  // substitution options per mention, respecting the category filter
  std::vector<std::vector<std::size_t>> options(mentions.size());
  std::vector<std::size_t> editable;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    if (spec.category && graph.attributes()[attrs[i]].category != *spec.category) continue;
    options[i] = graph.substitution_indices(attrs[i], gold);
    for (std::size_t r : options[i])
      if (!matcher.in_vocabulary(r))
        throw Error(ErrorCode::UnknownToken, "substitute '" + graph.attributes()[r].name +
                                                 "' for '" + graph.attributes()[attrs[i]].name +
                                                 "' is out of vocabulary");
    if (!options[i].empty()) editable.push_back(i);
  }

  SynthesisResult result;
  std::set<std::vector<TokenId>> seen{record.trace.tokens()};
  auto consider = [&](std::vector<Substitution> edits) {
    std::vector<std::size_t> after = attrs;
    for (const auto& e : edits) after[e.mention] = e.replacement;
    if (!plausible(graph, after) || !label_flip_check(graph, after, gold)) return;
    auto trace = apply_substitutions(record.trace, matcher, mentions, edits);
    if (!seen.insert(trace.tokens()).second) return;
    std::sort(edits.begin(), edits.end(),
              [](const Substitution& a, const Substitution& b) { return a.mention < b.mention; });
    result.candidates.push_back({std::move(trace), std::move(edits)});
  };

  for (std::size_t i : editable)
    for (std::size_t r : options[i]) {
      if (result.candidates.size() == spec.count) break;
      consider({{i, r}});
    }

  const std::size_t max_k = std::min(spec.max_substitutions, editable.size());
  if (result.candidates.size() < spec.count && max_k >= 2) {
    Rng rng = Rng::stream(spec.seed, "synthesis:" + record.record_id);
    const std::size_t budget = 64 * spec.count;
    for (std::size_t attempt = 0; attempt < budget && result.candidates.size() < spec.count;
         ++attempt) {
      const std::size_t k = 2 + static_cast<std::size_t>(rng.below(max_k - 1));
      std::vector<Substitution> edits;
      for (std::size_t pick : rng.sample_indices(editable.size(), k)) {
        const std::size_t i = editable[pick];
        edits.push_back({i, options[i][rng.below(options[i].size())]});
      }
      consider(std::move(edits));
    }
  }
  result.exhausted = result.candidates.size() < spec.count;
  return result;
}

ThinkingTrace random_negative(const ThinkingTrace& trace, const MentionMatcher& matcher, Rng& rng) {
  const auto mentions = matcher.extract(trace);
  if (mentions.empty()) throw Error(ErrorCode::NoMentions, "trace mentions no attribute");
  const std::size_t i = rng.below(mentions.size());
  std::vector<std::size_t> pool;
  for (std::size_t a = 0; a < matcher.graph().attributes().size(); ++a)
    if (a != mentions[i].attribute && matcher.in_vocabulary(a)) pool.push_back(a);
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no other attribute to substitute");
  const std::size_t r = pool[rng.below(pool.size())];
  return apply_substitutions(trace, matcher, mentions, {{i, r}});
}

// ---- perception -------------------------------------------------------------

VisualPool::VisualPool(std::vector<VisualContext> members) : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end(),
            [](const VisualContext& a, const VisualContext& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < members_.size(); ++i)
    if (members_[i].id == members_[i - 1].id)
      throw Error(ErrorCode::DuplicateId, "visual pool holds '" + members_[i].id + "' twice");
}

const VisualContext* VisualPool::find(std::string_view id) const {
  auto it = std::lower_bound(members_.begin(), members_.end(), id,
                             [](const VisualContext& v, std::string_view key) { return v.id < key; });
  return it != members_.end() && it->id == id ? &*it : nullptr;
}

namespace {

std::vector<std::string> bag(const std::vector<std::string>& attrs) {
  std::vector<std::string> out = attrs;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard_sorted(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - common;
  return 1.0 - static_cast<double>(common) / static_cast<double>(uni);
}

}  // namespace

double jaccard_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return jaccard_sorted(bag(a), bag(b));
}

std::vector<VisualContext> retrieve_visual_candidates(const VisualPool& pool,
                                                      const VisualContext& v, std::size_t k) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "visual pool is empty");
  const auto target = bag(v.attributes);
  std::vector<std::pair<double, const VisualContext*>> scored;
  for (const auto& m : pool.members()) {
    if (m.id == v.id) continue;
    const auto other = bag(m.attributes);
    if (other == target) continue;
    scored.push_back({jaccard_sorted(target, other), &m});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return a.second->id < b.second->id;
                    });
  std::vector<VisualContext> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(*scored[i].second);
  return out;
}

InverseMatch inverse_match(const PolicyParams& params, const ThinkingTrace& trace,
                           std::span<const TokenId> prompt, const VisualContext& v_init,
                           std::span<const VisualContext> distractors) {
  if (distractors.empty()) throw Error(ErrorCode::EmptyPool, "inverse matching needs a distractor");
  std::vector<VisualContext> all{v_init};
  all.insert(all.end(), distractors.begin(), distractors.end());
  std::set<std::string> ids;
  for (const auto& v : all)
    if (!ids.insert(v.id).second)
      throw Error(ErrorCode::DuplicateId, "candidate id '" + v.id + "' appears twice");

  const auto scores = kernels::score_visuals_parallel(params, trace, prompt, all);
  InverseMatch out;
  for (std::size_t i = 0; i < all.size(); ++i) out.ranking.push_back({all[i].id, scores[i]});
  std::sort(out.ranking.begin(), out.ranking.end(), [](const ScoredVisual& a, const ScoredVisual& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  const auto& top = out.ranking.front();
  const double margin = top.score - scores[0];
  if (top.id != v_init.id && margin > 0.0) {
    for (std::size_t i = 1; i < all.size(); ++i)
      if (all[i].id == top.id) out.hard_negative = HardNegative{all[i], margin};
  }
  return out;
}

// ---- pairs --------------------------------------------------------------------

std::string_view to_string(PairKind kind) {
  switch (kind) {
    case PairKind::ThinkingCf: return "thinking_cf";
    case PairKind::PerceptionCf: return "perception_cf";
    case PairKind::RandomNegative: return "random_negative";
  }
  return "?";
}

PairKind pair_kind_from_string(std::string_view text) {
  if (text == "thinking_cf") return PairKind::ThinkingCf;
  if (text == "perception_cf") return PairKind::PerceptionCf;
  if (text == "random_negative") return PairKind::RandomNegative;
  throw Error(ErrorCode::ParseError, "unknown pair kind '" + std::string(text) + "'");
}

void PreferencePair::validate() const {
  if (kind == PairKind::PerceptionCf) {
    if (!distractor || distractor->id == visual.id)
      throw Error(ErrorCode::InvariantViolation,
                  "perception pair for " + context + " needs a distractor distinct from v");
  } else {
    if (distractor)
      throw Error(ErrorCode::InvariantViolation, "thinking pair for " + context + " carries a distractor");
    if (chosen == rejected)
      throw Error(ErrorCode::InvariantViolation, "pair for " + context + " has identical sides");
  }
}

PreferencePair thinking_pair(const TraceRecord& record, ThinkingTrace rejected, PairKind kind) {
  PreferencePair p;
  p.context = record.record_id;
  p.visual = record.visual;
  p.prompt = record.prompt;
  p.chosen = record.trace;
  p.rejected = std::move(rejected);
  p.kind = kind;
  p.validate();
  return p;
}

PreferencePair perception_pair(const TraceRecord& record, const HardNegative& negative) {
  PreferencePair p;
  p.context = record.record_id;
  p.visual = record.visual;
  p.prompt = record.prompt;
  p.chosen = record.trace;
  p.rejected = record.trace;
  p.distractor = negative.distractor;
  p.kind = PairKind::PerceptionCf;
  p.margin = negative.margin;
  p.validate();
  return p;
}

std::string serialize_pairs(const std::vector<PreferencePair>& pairs) {
  std::string out = json{{"format", kPairFormat}, {"version", kPairFormatVersion}}.dump() + "\n";
  for (const auto& p : pairs) {
    json doc = {{"context", p.context}, {"chosen", p.chosen.tokens()}, {"kind", to_string(p.kind)}};
    if (p.kind == PairKind::PerceptionCf) doc["rejected"] = p.distractor->id;
    else doc["rejected"] = p.rejected.tokens();
    if (p.margin) doc["margin"] = *p.margin;
    out += doc.dump();
    out += '\n';
  }
  return out;
}

std::vector<PreferencePair> parse_pairs(std::string_view text,
                                        const std::vector<TraceRecord>& records,
                                        const Vocabulary& vocab) {
  std::map<std::string, const TraceRecord*, std::less<>> by_id;
  std::map<std::string, const VisualContext*, std::less<>> visuals;
  for (const auto& r : records) {
    by_id.emplace(r.record_id, &r);
    visuals.emplace(r.visual.id, &r.visual);
  }

  auto tokens_of = [&](const json& arr, std::size_t line) {
    if (!arr.is_array()) throw Error(ErrorCode::ParseError, "token list must be an array", line);
    std::vector<TokenId> out;
    for (const auto& t : arr) {
      if (!t.is_number_unsigned()) throw Error(ErrorCode::ParseError, "token ids must be unsigned", line);
      const auto id = t.get<std::uint64_t>();
      if (id >= vocab.size())
        throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " is outside the vocabulary", line);
      out.push_back(static_cast<TokenId>(id));
    }
    return ThinkingTrace::from_tokens(std::move(out), vocab.markers());
  };

  std::vector<PreferencePair> pairs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json doc = json::parse(line.begin(), line.end(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      throw Error(ErrorCode::ParseError, "pair is not a JSON object", line_no);
    if (!header) {
      if (doc.value("format", "") != kPairFormat || doc.value("version", 0) != kPairFormatVersion)
        throw Error(ErrorCode::ParseError, "missing pair file header", line_no);
      header = true;
      continue;
    }
    try {
      PreferencePair p;
      p.context = doc.at("context").get<std::string>();
      auto rec = by_id.find(p.context);
      if (rec == by_id.end())
        throw Error(ErrorCode::MissingReference, "no record '" + p.context + "'", line_no);
      p.visual = rec->second->visual;
      p.prompt = rec->second->prompt;
      p.kind = pair_kind_from_string(doc.at("kind").get<std::string>());
      p.chosen = tokens_of(doc.at("chosen"), line_no);
      if (p.kind == PairKind::PerceptionCf) {
        const auto vid = doc.at("rejected").get<std::string>();
        auto v = visuals.find(vid);
        if (v == visuals.end())
          throw Error(ErrorCode::MissingReference, "no visual context '" + vid + "'", line_no);
        p.distractor = *v->second;
        p.rejected = p.chosen;
      } else {
        p.rejected = tokens_of(doc.at("rejected"), line_no);
      }
      if (doc.contains("margin")) p.margin = doc.at("margin").get<double>();
      p.validate();
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("pair: ") + e.what(), line_no);
    } catch (const Error& e) {
      if (e.line() != 0) throw;
      throw e.at_line(line_no);
    }
  }
  if (!header) throw Error(ErrorCode::ParseError, "missing pair file header");
  return pairs;
}

// ---- builders -----------------------------------------------------------------

std::vector<PreferencePair> build_thinking_pairs(const std::vector<TraceRecord>& records,
                                                 const MentionMatcher& matcher,
                                                 const CounterfactualSpec& spec,
                                                 SynthesisSummary* summary) {
  spec.validate();
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  std::vector<SynthesisResult> results(records.size());
  std::vector<std::optional<Error>> errors(records.size());
  std::vector<char> skipped(records.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      results[i] = synthesize_thinking_cf(records[i], matcher, spec);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoMentions) skipped[i] = 1;
      else errors[i] = e;
    }
  }
  for (auto& e : errors)
    if (e) throw *e;

  std::vector<PreferencePair> pairs;
  SynthesisSummary s;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (skipped[i]) continue;
    ++s.records;
    if (results[i].exhausted) ++s.exhausted;
    for (auto& c : results[i].candidates) pairs.push_back(thinking_pair(records[i], std::move(c.trace)));
  }
  s.pairs = pairs.size();
  if (summary) *summary = s;
  return pairs;
}

std::vector<PreferencePair> mine_perception_pairs(const PolicyParams& params,
                                                  const std::vector<TraceRecord>& records,
                                                  std::size_t k,
                                                  std::vector<MiningEntry>* report) {
  std::map<std::string, VisualContext> unique;
  for (const auto& r : records) {
    auto [it, inserted] = unique.emplace(r.visual.id, r.visual);
    if (!inserted && !(it->second == r.visual))
      throw Error(ErrorCode::DuplicateId, "visual id '" + r.visual.id + "' names two contexts");
  }
  std::vector<VisualContext> members;
  for (auto& [id, v] : unique) members.push_back(std::move(v));
  const VisualPool pool(std::move(members));

  std::vector<PreferencePair> pairs;
  for (const auto& r : records) {
    const auto candidates = retrieve_visual_candidates(pool, r.visual, k);
    if (candidates.empty()) continue;
    auto match = inverse_match(params, r.trace, r.prompt, r.visual, candidates);
    if (match.hard_negative) pairs.push_back(perception_pair(r, *match.hard_negative));
    if (report) report->push_back({r.record_id, std::move(match)});
  }
  return pairs;
}

std::vector<PreferencePair> build_random_pairs(const std::vector<TraceRecord>& records,
                                               const MentionMatcher& matcher, std::size_t per_record,
                                               std::uint64_t seed) {
  std::vector<PreferencePair> pairs;
  for (const auto& r : records) {
    if (matcher.extract(r.trace).empty()) continue;
    Rng rng = Rng::stream(seed, "random:" + r.record_id);
    for (std::size_t i = 0; i < per_record; ++i)
      pairs.push_back(thinking_pair(r, random_negative(r.trace, matcher, rng), PairKind::RandomNegative));
  }
  return pairs;
}

}  // namespace cdrift
