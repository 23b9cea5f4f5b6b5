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
#include <filesystem>
#include <vector>

#include "cdrift/concept_graph.hpp"
#include "cdrift/counterfactual_engine.hpp"
#include "cdrift/manifest.hpp"
#include "cdrift/rng.hpp"
#include "cdrift/trace_model.hpp"
#include "cdrift/vocabulary.hpp"
#include "json.hpp"

namespace cdrift {

struct WorldConfig {
  std::size_t entities = 6;
  std::size_t attributes_per_entity = 4;
  std::size_t categories = 3;
  /// Attributes per category that no entity is Associated with; sampled as
  /// noise into visual bags.
  std::size_t neutral_per_category = 1;
  /// 0 picks the smallest vocabulary that fits.
  std::size_t vocab_size = 0;
  std::size_t max_length = 16;
  std::size_t drift_states = 2;
  double rho = 0.3;
  std::size_t records = 200;
  /// Noise attributes added to each visual bag.
  std::size_t noise_attributes = 1;
  std::uint64_t seed = 0;

  /// Throws InfeasibleConfig.
  void validate() const;
};

nlohmann::json to_json(const WorldConfig& config);
WorldConfig world_config_from_json(const nlohmann::json& doc);

struct World {
  ConceptGraph graph;
  Vocabulary vocab;
  std::vector<TokenId> prompt;
  std::vector<TokenId> spurious;  // one per entity
};

struct GoldRecord {
  TraceRecord record;
  std::size_t drift_state = 0;
  std::vector<std::size_t> spurious_positions;  // absolute token indices
};

/// Entities own `attributes_per_entity` attributes spread round-robin over
/// the categories; within a category every entity Excludes the other
/// entities' attributes. Attribute-to-entity assignment is drawn from rng.
World generate_world(const WorldConfig& config, Rng& rng);

/// Per record: drift state d uniform; label y drawn from
/// (1 - rho) * uniform + rho * [y == d mod E]; a visual bag of y's
/// attributes plus neutral noise; the gold trace lists the bag in
/// (category, id) order; with probability rho a spurious token naming the
/// wrong label (y + 1 + d) mod E is inserted at a uniform interior position.
std::vector<GoldRecord> generate_records(const WorldConfig& config, const World& world, Rng& rng);

struct GeneratedWorld {
  World world;
  std::vector<GoldRecord> records;
};

/// World and records drawn from the "world" sub-stream of config.seed.
GeneratedWorld generate(const WorldConfig& config);

/// The entity with the largest Associated overlap with the bag, ties to the
/// lowest index.
std::size_t rule_oracle_label(const ConceptGraph& graph, const VisualContext& v);

enum class InterferenceTarget { ThinkPrefix, Prompt };

struct Interference {
  TraceRecord record;
  std::vector<Substitution> edits;
};

/// Replaces ceil(ratio * M) of the M mentions, chosen by rng among those with
/// a non-empty substitution set, with a uniformly drawn member of that set.
/// With InterferenceTarget::Prompt the interfered think body is appended to
/// the prompt and the trace is left as given. States and frames are dropped.
/// Throws NoMentions, InfeasibleConfig, InvalidConfig.
Interference inject_interference(const TraceRecord& record, const MentionMatcher& matcher,
                                 double ratio, Rng& rng,
                                 InterferenceTarget target = InterferenceTarget::ThinkPrefix);

/// ceil(ratio * m) with a guard against representation error, so 0.6 * 5
/// yields 3.
std::size_t interference_count(double ratio, std::size_t m);

/// Writes graph.json, vocab.txt, records.jsonl and world.json (config, seed,
/// per-record drift state and spurious positions); returns the paths written.
std::vector<std::filesystem::path> write_world(const std::filesystem::path& dir,
                                               const WorldConfig& config, const World& world,
                                               const std::vector<GoldRecord>& records);

}  // namespace cdrift
