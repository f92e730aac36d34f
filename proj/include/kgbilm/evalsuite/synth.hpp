#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"
#include "kgbilm/util/errors.hpp"

namespace kgbilm {

/// Group-structured graph with templated descriptions. Entities fall into
/// `groups` equal clusters; relation r sends group g to group perm_r(g) and
/// picks the tail inside that group with a Zipf-like popularity skew. The
/// first `intra_relations` relations keep the tail in the head's own group.
/// Descriptions name the entity's group, a trait, and the groups the first
/// two cross-group relations point to.
struct SynthConfig {
  std::size_t entities = 200;
  std::size_t relations = 8;
  std::size_t groups = 20;
  std::size_t intra_relations = 4;
  double keep = 0.98;          // probability each (head, relation) slot yields a triple
  double popularity_skew = 2.0;  // Zipf exponent inside a group
  std::size_t traits = 24;
  std::uint64_t seed = 0;
};

inline KnowledgeGraph synthetic_kg(const SynthConfig& cfg) {
  if (cfg.entities == 0 || cfg.relations == 0 || cfg.groups == 0 || cfg.entities % cfg.groups != 0) {
    throw ConfigError("synthetic_kg: entities must be a positive multiple of groups");
  }
  if (cfg.intra_relations > cfg.relations) throw ConfigError("synthetic_kg: intra_relations exceeds relations");
  if (cfg.traits == 0 || !(cfg.keep > 0 && cfg.keep <= 1)) throw ConfigError("synthetic_kg: bad traits or keep");
  std::mt19937_64 rng(cfg.seed);
  const std::size_t per_group = cfg.entities / cfg.groups;
  auto group_word = [](std::size_t g) { return "clan" + std::to_string(g); };
  auto name = [](std::size_t e) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ent%03zu", e);
    return std::string(buf);
  };

  std::vector<std::vector<std::size_t>> perm(cfg.relations, std::vector<std::size_t>(cfg.groups));
  for (std::size_t r = 0; r < cfg.relations; ++r) {
    std::iota(perm[r].begin(), perm[r].end(), 0);
    if (r >= cfg.intra_relations) std::shuffle(perm[r].begin(), perm[r].end(), rng);
  }
  std::vector<double> weights(per_group);
  for (std::size_t k = 0; k < per_group; ++k) weights[k] = 1.0 / std::pow(static_cast<double>(k + 1), cfg.popularity_skew);
  std::discrete_distribution<std::size_t> member(weights.begin(), weights.end());
  std::bernoulli_distribution keep(cfg.keep);
  std::uniform_int_distribution<std::size_t> trait(0, cfg.traits - 1);

  KnowledgeGraph kg;
  for (std::size_t e = 0; e < cfg.entities; ++e) kg.add_entity(name(e));
  for (std::size_t r = 0; r < cfg.relations; ++r) kg.add_relation("rel" + std::to_string(r));
  for (std::size_t h = 0; h < cfg.entities; ++h) {
    const std::size_t g = h / per_group;
    for (std::size_t r = 0; r < cfg.relations; ++r) {
      const std::size_t t = perm[r][g] * per_group + member(rng);
      if (!keep(rng) || t == h) continue;
      kg.add_triple(Triple{static_cast<EntityId>(h), static_cast<RelationId>(r), static_cast<EntityId>(t)});
    }
  }
  for (std::size_t e = 0; e < cfg.entities; ++e) {
    const std::size_t g = e / per_group;
    std::string text = group_word(g) + " trait" + std::to_string(trait(rng));
    const std::size_t r0 = cfg.intra_relations;
    if (r0 < cfg.relations) text += " bound to " + group_word(perm[r0][g]);
    if (r0 + 1 < cfg.relations) text += " and " + group_word(perm[r0 + 1][g]);
    kg.set_description(static_cast<EntityId>(e), text);
  }
  return kg;
}

}  // namespace kgbilm
