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
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace cdrift {

enum class RelationKind : std::uint8_t { Association, Irrelevance, Exclusion };

std::string_view to_string(RelationKind kind);
RelationKind relation_kind_from_string(std::string_view text);

struct Entity {
  std::string id;
  std::string name;
  bool operator==(const Entity&) const = default;
};

struct Attribute {
  std::string id;
  std::string name;
  std::string category;
  bool operator==(const Attribute&) const = default;
};

struct Relation {
  std::string entity;
  std::string attribute;
  RelationKind kind;
  bool operator==(const Relation&) const = default;
};

struct GraphCounts {
  std::size_t entities = 0;
  std::size_t attributes = 0;
  std::size_t relations = 0;
};

/// Hierarchical domain knowledge graph: entities, attributes grouped into
/// categories, and Association / Irrelevance / Exclusion relations between an
/// entity and an attribute.
///
/// Immutable after construction. Entities and attributes are held sorted by id,
/// so indices are stable for a given content regardless of document order.
/// Undeclared (entity, attribute) pairs read as Irrelevance.
class ConceptGraph {
 public:
  ConceptGraph() = default;

  /// Validates and builds. Throws Error with ParseError, DuplicateId,
  /// MissingReference, DuplicateRelation or UnknownCategory.
  static ConceptGraph build(std::vector<Entity> entities, std::vector<Attribute> attributes,
                            std::vector<Relation> relations, std::vector<std::string> categories);
  static ConceptGraph from_json(const nlohmann::json& doc);
  static ConceptGraph parse(std::string_view text);
  static ConceptGraph load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  std::string serialize() const;

  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  const std::vector<std::string>& categories() const { return categories_; }
  /// Declared relations, sorted by (entity, attribute).
  const std::vector<Relation>& relations() const { return relations_; }
  GraphCounts counts() const { return {entities_.size(), attributes_.size(), relations_.size()}; }

  /// Asymmetric exclusion pairs found during validation; informational only.
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::optional<std::size_t> entity_index(std::string_view id) const;
  std::optional<std::size_t> attribute_index(std::string_view id) const;
  std::size_t require_entity(std::string_view id) const;
  std::size_t require_attribute(std::string_view id) const;

  RelationKind relation_of(std::string_view entity, std::string_view attribute) const;
  RelationKind relation_at(std::size_t entity, std::size_t attribute) const {
    return table_[entity * attributes_.size() + attribute];
  }

  /// Same-category attributes whose relation to `context_entity` differs from
  /// that of `attribute`, ascending by id. Never contains `attribute` itself.
  std::vector<std::string> substitution_set(std::string_view attribute,
                                            std::string_view context_entity) const;
  std::vector<std::size_t> substitution_indices(std::size_t attribute,
                                                std::size_t context_entity) const;

  /// Entities the attribute is Associated with.
  std::vector<std::size_t> associated_entities(std::size_t attribute) const;

  bool operator==(const ConceptGraph& other) const;

 private:
  std::vector<Entity> entities_;
  std::vector<Attribute> attributes_;
  std::vector<std::string> categories_;
  std::vector<Relation> relations_;
  std::vector<RelationKind> table_;  // entities x attributes, row-major
  std::vector<std::size_t> attribute_category_;
  std::unordered_map<std::string, std::size_t> entity_lookup_;
  std::unordered_map<std::string, std::size_t> attribute_lookup_;
  std::vector<std::string> warnings_;
};

}  // namespace cdrift
