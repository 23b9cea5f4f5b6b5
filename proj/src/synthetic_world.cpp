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


#include "cdrift/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

std::size_t neutral_total(const WorldConfig& c) { return c.categories * c.neutral_per_category; }

std::size_t required_vocab(const WorldConfig& c) {
  return 3 + c.entities * c.attributes_per_entity + neutral_total(c) + c.entities;
}

}  // namespace

void WorldConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InfeasibleConfig, msg); };
  if (entities < 2) fail("a world needs at least two entities");
  if (attributes_per_entity < 1) fail("every entity needs an attribute");
  if (categories < 1) fail("a world needs at least one category");
  if (drift_states < 1) fail("a world needs at least one drift state");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho must lie in [0, 1]");
  if (max_length < 4) fail("max trace length must be at least 4");
  if (noise_attributes > neutral_total(*this))
    fail("more noise attributes per record than neutral attributes");
  if (vocab_size != 0 && vocab_size < required_vocab(*this))
    fail("vocabulary of " + std::to_string(vocab_size) + " cannot hold the " +
         std::to_string(required_vocab(*this)) + " tokens the world needs");
  if (2 + attributes_per_entity + noise_attributes + (rho > 0.0 ? 1 : 0) > max_length)
    fail("gold traces would exceed the max trace length");
}

json to_json(const WorldConfig& c) {
  return {{"entities", c.entities},
          {"attributes_per_entity", c.attributes_per_entity},
          {"categories", c.categories},
          {"neutral_per_category", c.neutral_per_category},
          {"vocab_size", c.vocab_size},
          {"max_length", c.max_length},
          {"drift_states", c.drift_states},
          {"rho", c.rho},
          {"records", c.records},
          {"noise_attributes", c.noise_attributes},
          {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& doc) {
  WorldConfig c;
  try {
    auto opt = [&](const char* key, auto& field) {
      if (doc.contains(key)) doc.at(key).get_to(field);
    };
    opt("entities", c.entities);
    opt("attributes_per_entity", c.attributes_per_entity);
    opt("categories", c.categories);
    opt("neutral_per_category", c.neutral_per_category);
    opt("vocab_size", c.vocab_size);
    opt("max_length", c.max_length);
    opt("drift_states", c.drift_states);
    opt("rho", c.rho);
    opt("records", c.records);
    opt("noise_attributes", c.noise_attributes);
    opt("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("world config: ") + e.what());
  }
  c.validate();
  return c;
}

World generate_world(const WorldConfig& config, Rng& rng) {
  config.validate();
  const std::size_t E = config.entities;
  const std::size_t k = config.attributes_per_entity;
  const std::size_t owned = E * k;
  const std::size_t total = owned + neutral_total(config);

  std::vector<std::string> categories;
  for (std::size_t c = 0; c < config.categories; ++c) categories.push_back(numbered("c", c, 1));

  // slot s is entity s / k's (s % k)-th attribute; perm maps slots to ids
  std::vector<std::size_t> perm(owned);
  for (std::size_t s = 0; s < owned; ++s) perm[s] = s;
  rng.shuffle(perm);

  std::vector<Entity> entities;
  for (std::size_t e = 0; e < E; ++e)
    entities.push_back({numbered("e", e, 2), numbered("entity", e, 2)});
  std::vector<Attribute> attributes(total);
  std::vector<std::size_t> owner(total, E);
  for (std::size_t s = 0; s < owned; ++s) {
    const std::size_t id = perm[s];
    attributes[id] = {numbered("a", id, 3), numbered("f", id, 3),
                      categories[(s % k) % config.categories]};
    owner[id] = s / k;
  }
  for (std::size_t n = 0; n < neutral_total(config); ++n) {
    const std::size_t id = owned + n;
    attributes[id] = {numbered("a", id, 3), numbered("f", id, 3),
                      categories[n / config.neutral_per_category]};
  }

  std::vector<Relation> relations;
  for (std::size_t a = 0; a < owned; ++a)
    relations.push_back({entities[owner[a]].id, attributes[a].id, RelationKind::Association});
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t a = 0; a < owned; ++a) {
      if (owner[a] == e) continue;
      const bool shares_category = std::any_of(perm.begin(), perm.end(), [&](std::size_t b) {
        return owner[b] == e && attributes[b].category == attributes[a].category;
      });
      if (shares_category) relations.push_back({entities[e].id, attributes[a].id, RelationKind::Exclusion});
    }
  }

  std::vector<std::string> tokens{"<think>", "</think>", "<q>"};
  for (const auto& a : attributes) tokens.push_back(a.name);
  for (std::size_t e = 0; e < E; ++e) tokens.push_back(numbered("sp", e, 2));
  const std::size_t size = config.vocab_size ? config.vocab_size : tokens.size();
  for (std::size_t i = 0; tokens.size() < size; ++i) tokens.push_back(numbered("pad", i, 4));

  World w;
  w.graph = ConceptGraph::build(std::move(entities), std::move(attributes), std::move(relations),
                                std::move(categories));
  w.vocab = Vocabulary(std::move(tokens), ThinkMarkers{0, 1});
  w.prompt = {2};
  for (std::size_t e = 0; e < E; ++e)
    w.spurious.push_back(static_cast<TokenId>(3 + total + e));
  return w;
}

std::vector<GoldRecord> generate_records(const WorldConfig& config, const World& world, Rng& rng) {
  config.validate();
  const auto& graph = world.graph;
  const std::size_t E = graph.entities().size();
  if (E != config.entities || world.spurious.size() != E)
    throw Error(ErrorCode::InfeasibleConfig, "world does not match the config");

  std::vector<std::vector<std::size_t>> own(E);
  std::vector<std::size_t> neutral;
  for (std::size_t a = 0; a < graph.attributes().size(); ++a) {
    auto assoc = graph.associated_entities(a);
    if (assoc.empty()) neutral.push_back(a);
    for (std::size_t e : assoc) own[e].push_back(a);
  }
  if (neutral.size() < config.noise_attributes)
    throw Error(ErrorCode::InfeasibleConfig, "world has too few neutral attributes");
  std::vector<std::size_t> category_of(graph.attributes().size());
  for (std::size_t a = 0; a < graph.attributes().size(); ++a) {
    const auto& cats = graph.categories();
    category_of[a] = static_cast<std::size_t>(
        std::find(cats.begin(), cats.end(), graph.attributes()[a].category) - cats.begin());
  }
  const MentionMatcher matcher(graph, world.vocab);

  std::vector<GoldRecord> out;
  out.reserve(config.records);
  for (std::size_t r = 0; r < config.records; ++r) {
    GoldRecord g;
    g.drift_state = static_cast<std::size_t>(rng.below(config.drift_states));
    std::size_t y = static_cast<std::size_t>(rng.below(E));
    if (rng.bernoulli(config.rho)) y = g.drift_state % E;
    const auto& mine = own[y];
    const std::size_t lo = (mine.size() + 1) / 2;
    const std::size_t size = lo + static_cast<std::size_t>(rng.below(mine.size() - lo + 1));
    std::vector<std::size_t> bag;
    for (std::size_t i : rng.sample_indices(mine.size(), size)) bag.push_back(mine[i]);
    for (std::size_t i : rng.sample_indices(neutral.size(), config.noise_attributes))
      bag.push_back(neutral[i]);
    std::sort(bag.begin(), bag.end(), [&](std::size_t a, std::size_t b) {
      if (category_of[a] != category_of[b]) return category_of[a] < category_of[b];
      return a < b;
    });

    std::vector<TokenId> body;
    for (std::size_t a : bag) {
      const auto& name = matcher.name_tokens(a);
      body.insert(body.end(), name.begin(), name.end());
    }
    if (rng.bernoulli(config.rho)) {
      const std::size_t wrong = (y + 1 + g.drift_state) % E;
      const std::size_t at = static_cast<std::size_t>(rng.below(body.size() + 1));
      body.insert(body.begin() + static_cast<std::ptrdiff_t>(at), world.spurious[wrong]);
      g.spurious_positions.push_back(at + 1);
    }

    auto& rec = g.record;
    rec.record_id = numbered("r", r, 5);
    rec.visual.id = numbered("v", r, 5);
    for (std::size_t a : bag) rec.visual.attributes.push_back(graph.attributes()[a].id);
    std::sort(rec.visual.attributes.begin(), rec.visual.attributes.end());
    rec.prompt = world.prompt;
    rec.trace = ThinkingTrace::wrap(body, world.vocab.markers());
    rec.gold_label = graph.entities()[y].id;
    if (rec.trace.size() > config.max_length)
      throw Error(ErrorCode::InfeasibleConfig, "gold trace exceeds the max trace length");
    out.push_back(std::move(g));
  }
  return out;
}

std::size_t rule_oracle_label(const ConceptGraph& graph, const VisualContext& v) {
  std::size_t best = 0;
  std::size_t best_overlap = 0;
  for (std::size_t e = 0; e < graph.entities().size(); ++e) {
    std::size_t overlap = 0;
    for (const auto& id : v.attributes)
      if (graph.relation_of(graph.entities()[e].id, id) == RelationKind::Association) ++overlap;
    if (overlap > best_overlap) {
      best = e;
      best_overlap = overlap;
    }
  }
  return best;
}

std::size_t interference_count(double ratio, std::size_t m) {
  const double x = std::ceil(ratio * static_cast<double>(m) - 1e-9);
  if (x <= 0.0) return 0;
  return std::min(m, static_cast<std::size_t>(x));
}

Interference inject_interference(const TraceRecord& record, const MentionMatcher& matcher,
                                 double ratio, Rng& rng, InterferenceTarget target) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "interference ratio must lie in [0, 1]");
  const auto& graph = matcher.graph();
  const std::size_t gold = graph.require_entity(record.gold_label);
  const auto mentions = matcher.extract(record.trace);
  if (mentions.empty())
    throw Error(ErrorCode::NoMentions, "record " + record.record_id + " mentions no attribute");

  std::vector<std::size_t> editable;
  std::vector<std::vector<std::size_t>> options(mentions.size());
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    for (std::size_t r : graph.substitution_indices(mentions[i].attribute, gold))
      if (matcher.in_vocabulary(r)) options[i].push_back(r);
    if (!options[i].empty()) editable.push_back(i);
  }
  const std::size_t count = interference_count(ratio, mentions.size());
  if (count > editable.size())
    throw Error(ErrorCode::InfeasibleConfig, "record " + record.record_id + " has only " +
                                                 std::to_string(editable.size()) +
                                                 " substitutable mentions");

  Interference out;
  for (std::size_t pick : rng.sample_indices(editable.size(), count)) {
    const std::size_t i = editable[pick];
    out.edits.push_back({i, options[i][rng.below(options[i].size())]});
  }
  const auto trace = apply_substitutions(record.trace, matcher, mentions, out.edits);

  out.record = record;
  out.record.z.reset();
  out.record.attention.reset();
  if (target == InterferenceTarget::ThinkPrefix) {
    out.record.trace = trace;
  } else {
    const auto body = trace.span();
    out.record.prompt.insert(out.record.prompt.end(), body.begin(), body.end());
  }
  return out;
}

GeneratedWorld generate(const WorldConfig& config) {
  Rng rng = Rng::stream(config.seed, "world");
  GeneratedWorld out;
  out.world = generate_world(config, rng);
  out.records = generate_records(config, out.world, rng);
  return out;
}

std::vector<std::filesystem::path> write_world(const std::filesystem::path& dir,
                                               const WorldConfig& config, const World& world,
                                               const std::vector<GoldRecord>& records) {
  std::vector<TraceRecord> plain;
  json meta = json::array();
  for (const auto& g : records) {
    plain.push_back(g.record);
    meta.push_back({{"record_id", g.record.record_id},
                    {"drift_state", g.drift_state},
                    {"spurious_positions", g.spurious_positions}});
  }
  json doc = {{"config", to_json(config)},
              {"seed", config.seed},
              {"prompt", world.prompt},
              {"spurious_tokens", world.spurious},
              {"records", meta}};
  const std::vector<std::filesystem::path> paths{dir / "graph.json", dir / "vocab.txt",
                                                 dir / "records.jsonl", dir / "world.json"};
  write_file_atomic(paths[0], world.graph.serialize());
  write_file_atomic(paths[1], world.vocab.serialize());
  write_file_atomic(paths[2], serialize_records(plain));
  write_file_atomic(paths[3], doc.dump(2) + "\n");
  return paths;
}

}  // namespace cdrift
