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


#include "cdrift/concept_graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::Association: return "association";
    case RelationKind::Irrelevance: return "irrelevance";
    case RelationKind::Exclusion: return "exclusion";
  }
  return "irrelevance";
}

RelationKind relation_kind_from_string(std::string_view text) {
  if (text == "association") return RelationKind::Association;
  if (text == "irrelevance") return RelationKind::Irrelevance;
  if (text == "exclusion") return RelationKind::Exclusion;
  throw Error(ErrorCode::ParseError, "unknown relation kind '" + std::string(text) + "'");
}

namespace {

const json& required_array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array())
    throw Error(ErrorCode::ParseError, std::string("missing array '") + key + "'");
  return *it;
}

std::string required_string(const json& obj, const char* key, const char* where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw Error(ErrorCode::ParseError,
                std::string(where) + " entry lacks string field '" + key + "'");
  return it->get<std::string>();
}

}  // namespace

ConceptGraph ConceptGraph::build(std::vector<Entity> entities, std::vector<Attribute> attributes,
                                 std::vector<Relation> relations,
                                 std::vector<std::string> categories) {
  ConceptGraph g;

  std::sort(categories.begin(), categories.end());
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());
  for (const auto& c : categories)
    if (c.empty()) throw Error(ErrorCode::ParseError, "empty category label");
  g.categories_ = std::move(categories);

  std::sort(entities.begin(), entities.end(),
            [](const Entity& a, const Entity& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (entities[i].id.empty()) throw Error(ErrorCode::ParseError, "entity with empty id");
    if (i > 0 && entities[i].id == entities[i - 1].id)
      throw Error(ErrorCode::DuplicateId, "entity id '" + entities[i].id + "' appears twice");
    g.entity_lookup_.emplace(entities[i].id, i);
  }
  g.entities_ = std::move(entities);

  std::sort(attributes.begin(), attributes.end(),
            [](const Attribute& a, const Attribute& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    const auto& a = attributes[i];
    if (a.id.empty()) throw Error(ErrorCode::ParseError, "attribute with empty id");
    if (a.name.find_first_not_of(" \t") == std::string::npos)
      throw Error(ErrorCode::ParseError, "attribute '" + a.id + "' has an empty name");
    if (i > 0 && a.id == attributes[i - 1].id)
      throw Error(ErrorCode::DuplicateId, "attribute id '" + a.id + "' appears twice");
    if (g.entity_lookup_.count(a.id))
      throw Error(ErrorCode::DuplicateId, "id '" + a.id + "' used by an entity and an attribute");
    auto cat = std::lower_bound(g.categories_.begin(), g.categories_.end(), a.category);
    if (cat == g.categories_.end() || *cat != a.category)
      throw Error(ErrorCode::UnknownCategory,
                  "attribute '" + a.id + "' uses undeclared category '" + a.category + "'");
    g.attribute_category_.push_back(static_cast<std::size_t>(cat - g.categories_.begin()));
    g.attribute_lookup_.emplace(a.id, i);
  }
  g.attributes_ = std::move(attributes);

  const std::size_t n_attr = g.attributes_.size();
  g.table_.assign(g.entities_.size() * n_attr, RelationKind::Irrelevance);
  std::vector<bool> declared(g.table_.size(), false);

  for (const auto& r : relations) {
    auto e = g.entity_index(r.entity);
    if (!e)
      throw Error(ErrorCode::MissingReference, "relation references unknown entity '" + r.entity + "'");
    auto a = g.attribute_index(r.attribute);
    if (!a)
      throw Error(ErrorCode::MissingReference,
                  "relation references unknown attribute '" + r.attribute + "'");
    std::size_t cell = *e * n_attr + *a;
    if (declared[cell]) {
      if (g.table_[cell] != r.kind)
        throw Error(ErrorCode::DuplicateRelation, "pair (" + r.entity + ", " + r.attribute +
                                                      ") declared with conflicting kinds");
      continue;
    }
    declared[cell] = true;
    g.table_[cell] = r.kind;
  }

  for (std::size_t e = 0; e < g.entities_.size(); ++e)
    for (std::size_t a = 0; a < n_attr; ++a)
      if (declared[e * n_attr + a])
        g.relations_.push_back({g.entities_[e].id, g.attributes_[a].id, g.table_[e * n_attr + a]});

  // Exclusion e1 -x- b, with b Associated to e2, is mirrored when e2 excludes
  // every same-category attribute that e1 is Associated with.
  for (std::size_t e1 = 0; e1 < g.entities_.size(); ++e1) {
    for (std::size_t b = 0; b < n_attr; ++b) {
      if (g.relation_at(e1, b) != RelationKind::Exclusion) continue;
      for (std::size_t e2 : g.associated_entities(b)) {
        if (e2 == e1) continue;
        for (std::size_t a = 0; a < n_attr; ++a) {
          if (g.attribute_category_[a] != g.attribute_category_[b]) continue;
          if (g.relation_at(e1, a) != RelationKind::Association) continue;
          if (g.relation_at(e2, a) == RelationKind::Exclusion) continue;
          g.warnings_.push_back("asymmetric exclusion: " + g.entities_[e1].id + " excludes " +
                                g.attributes_[b].id + " but " + g.entities_[e2].id +
                                " does not exclude " + g.attributes_[a].id);
        }
      }
    }
  }
  return g;
}

ConceptGraph ConceptGraph::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "graph document must be an object");
  std::vector<Entity> entities;
  std::vector<Attribute> attributes;
  std::vector<Relation> relations;
  std::vector<std::string> categories;

  for (const auto& e : required_array(doc, "entities")) {
    if (!e.is_object()) throw Error(ErrorCode::ParseError, "entity entry must be an object");
    entities.push_back({required_string(e, "id", "entity"), required_string(e, "name", "entity")});
  }
  for (const auto& a : required_array(doc, "attributes")) {
    if (!a.is_object()) throw Error(ErrorCode::ParseError, "attribute entry must be an object");
    attributes.push_back({required_string(a, "id", "attribute"),
                          required_string(a, "name", "attribute"),
                          required_string(a, "category", "attribute")});
  }
  for (const auto& r : required_array(doc, "relations")) {
    if (!r.is_object()) throw Error(ErrorCode::ParseError, "relation entry must be an object");
    relations.push_back({required_string(r, "entity", "relation"),
                         required_string(r, "attribute", "relation"),
                         relation_kind_from_string(required_string(r, "kind", "relation"))});
  }
  for (const auto& c : required_array(doc, "categories")) {
    if (!c.is_string()) throw Error(ErrorCode::ParseError, "category labels must be strings");
    categories.push_back(c.get<std::string>());
  }
  return build(std::move(entities), std::move(attributes), std::move(relations),
               std::move(categories));
}

ConceptGraph ConceptGraph::parse(std::string_view text) {
  json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::ParseError, "graph document is not valid JSON");
  return from_json(doc);
}

ConceptGraph ConceptGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open graph file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

json ConceptGraph::to_json() const {
  json doc;
  doc["entities"] = json::array();
  for (const auto& e : entities_) doc["entities"].push_back({{"id", e.id}, {"name", e.name}});
  doc["attributes"] = json::array();
  for (const auto& a : attributes_)
    doc["attributes"].push_back({{"id", a.id}, {"name", a.name}, {"category", a.category}});
  doc["relations"] = json::array();
  for (const auto& r : relations_)
    doc["relations"].push_back(
        {{"entity", r.entity}, {"attribute", r.attribute}, {"kind", std::string(to_string(r.kind))}});
  doc["categories"] = categories_;
  return doc;
}

std::string ConceptGraph::serialize() const { return to_json().dump(2) + "\n"; }

std::optional<std::size_t> ConceptGraph::entity_index(std::string_view id) const {
  auto it = entity_lookup_.find(std::string(id));
  if (it == entity_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ConceptGraph::attribute_index(std::string_view id) const {
  auto it = attribute_lookup_.find(std::string(id));
  if (it == attribute_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t ConceptGraph::require_entity(std::string_view id) const {
  auto e = entity_index(id);
  if (!e) throw Error(ErrorCode::UnknownEntity, "no entity '" + std::string(id) + "'");
  return *e;
}

std::size_t ConceptGraph::require_attribute(std::string_view id) const {
  auto a = attribute_index(id);
  if (!a) throw Error(ErrorCode::UnknownAttribute, "no attribute '" + std::string(id) + "'");
  return *a;
}

RelationKind ConceptGraph::relation_of(std::string_view entity, std::string_view attribute) const {
  std::size_t e = require_entity(entity);
  std::size_t a = require_attribute(attribute);
  return relation_at(e, a);
}

std::vector<std::size_t> ConceptGraph::substitution_indices(std::size_t attribute,
                                                            std::size_t context_entity) const {
  std::vector<std::size_t> out;
  const RelationKind own = relation_at(context_entity, attribute);
  for (std::size_t a = 0; a < attributes_.size(); ++a) {
    if (a == attribute || attribute_category_[a] != attribute_category_[attribute]) continue;
    if (relation_at(context_entity, a) != own) out.push_back(a);
  }
  return out;
}

std::vector<std::string> ConceptGraph::substitution_set(std::string_view attribute,
                                                        std::string_view context_entity) const {
  std::size_t e = require_entity(context_entity);
  std::size_t a = require_attribute(attribute);
  std::vector<std::string> out;
  for (std::size_t i : substitution_indices(a, e)) out.push_back(attributes_[i].id);
  return out;
}

std::vector<std::size_t> ConceptGraph::associated_entities(std::size_t attribute) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < entities_.size(); ++e)
    if (relation_at(e, attribute) == RelationKind::Association) out.push_back(e);
  return out;
}

bool ConceptGraph::operator==(const ConceptGraph& other) const {
  return entities_ == other.entities_ && attributes_ == other.attributes_ &&
         categories_ == other.categories_ && relations_ == other.relations_;
}

}  // namespace cdrift
