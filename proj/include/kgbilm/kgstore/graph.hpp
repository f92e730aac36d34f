#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgbilm/util/errors.hpp"

namespace kgbilm {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t v : {std::uint64_t{t.head}, std::uint64_t{t.relation}, std::uint64_t{t.tail}}) {
      h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

enum class Direction : std::uint8_t { kForward, kBackward };

/// One adjacency entry: `neighbor` is reached over triple `triple`, either
/// following it (this entity is the head) or against it (this entity is the tail).
struct Edge {
  EntityId neighbor = 0;
  RelationId relation = 0;
  Direction direction = Direction::kForward;
  std::size_t triple = 0;
};

/// Entities, relations, deduplicated triples, adjacency and optional entity
/// descriptions. Ids are dense and assigned in first-appearance order.
class KnowledgeGraph {
 public:
  EntityId add_entity(std::string_view name) {
    if (auto it = entity_index_.find(std::string(name)); it != entity_index_.end()) return it->second;
    const auto id = static_cast<EntityId>(entity_names_.size());
    entity_names_.emplace_back(name);
    entity_index_.emplace(entity_names_.back(), id);
    adjacency_.emplace_back();
    descriptions_.emplace_back();
    return id;
  }

  RelationId add_relation(std::string_view name) {
    if (auto it = relation_index_.find(std::string(name)); it != relation_index_.end()) return it->second;
    const auto id = static_cast<RelationId>(relation_names_.size());
    relation_names_.emplace_back(name);
    relation_index_.emplace(relation_names_.back(), id);
    return id;
  }

  /// Adds a triple unless an identical one exists. Returns whether it was new.
  bool add_triple(const Triple& t) {
    check_entity(t.head);
    check_entity(t.tail);
    check_relation(t.relation);
    if (!triple_set_.insert(t).second) return false;
    const std::size_t idx = triples_.size();
    triples_.push_back(t);
    adjacency_[t.head].push_back({t.tail, t.relation, Direction::kForward, idx});
    adjacency_[t.tail].push_back({t.head, t.relation, Direction::kBackward, idx});
    return true;
  }

  bool add_triple(std::string_view head, std::string_view relation, std::string_view tail) {
    const EntityId h = add_entity(head);
    const RelationId r = add_relation(relation);
    const EntityId t = add_entity(tail);
    return add_triple(Triple{h, r, t});
  }

  /// Same entity/relation id space and descriptions, restricted triple set.
  KnowledgeGraph with_triples(std::span<const Triple> triples) const {
    KnowledgeGraph out;
    out.entity_names_ = entity_names_;
    out.entity_index_ = entity_index_;
    out.relation_names_ = relation_names_;
    out.relation_index_ = relation_index_;
    out.descriptions_ = descriptions_;
    out.adjacency_.assign(entity_names_.size(), {});
    for (const auto& t : triples) out.add_triple(t);
    return out;
  }

  std::size_t num_entities() const noexcept { return entity_names_.size(); }
  std::size_t num_relations() const noexcept { return relation_names_.size(); }
  std::size_t num_triples() const noexcept { return triples_.size(); }

  const std::vector<Triple>& triples() const noexcept { return triples_; }
  const std::vector<Edge>& adjacency(EntityId e) const {
    check_entity(e);
    return adjacency_[e];
  }
  std::size_t degree(EntityId e) const { return adjacency(e).size(); }
  bool contains(const Triple& t) const { return triple_set_.contains(t); }

  const std::string& entity_name(EntityId e) const {
    check_entity(e);
    return entity_names_[e];
  }
  const std::string& relation_name(RelationId r) const {
    check_relation(r);
    return relation_names_[r];
  }
  std::optional<EntityId> find_entity(std::string_view name) const {
    auto it = entity_index_.find(std::string(name));
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<RelationId> find_relation(std::string_view name) const {
    auto it = relation_index_.find(std::string(name));
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
  }

  void set_description(EntityId e, std::string text) {
    check_entity(e);
    descriptions_[e] = std::move(text);
  }
  std::optional<std::string_view> description(EntityId e) const {
    check_entity(e);
    if (!descriptions_[e]) return std::nullopt;
    return std::string_view(*descriptions_[e]);
  }
  std::size_t num_descriptions() const {
    std::size_t n = 0;
    for (const auto& d : descriptions_) n += d.has_value();
    return n;
  }

  void check_entity(EntityId e) const {
    if (e >= entity_names_.size()) throw DataError("unknown entity id " + std::to_string(e));
  }
  void check_relation(RelationId r) const {
    if (r >= relation_names_.size()) throw DataError("unknown relation id " + std::to_string(r));
  }

 private:
  std::vector<std::string> entity_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> triple_set_;
  std::vector<std::vector<Edge>> adjacency_;
  std::vector<std::optional<std::string>> descriptions_;
};

}  // namespace kgbilm
