#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"

namespace kgbilm {

namespace detail {

/// First `k` elements of `items` become a uniform sample without replacement.
template <class U, class Rng>
void partial_shuffle(std::vector<U>& items, std::size_t k, Rng& rng) {
  k = std::min(k, items.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

}  // namespace detail

/// Indices of the triples traversed by an undirected BFS of `radius` hops
/// around `seed` (every returned triple has both endpoints within `radius`).
/// Larger neighbourhoods are subsampled to `max_triples`, always keeping at
/// least one triple incident to `seed`. Output is sorted by triple index.
template <class Rng>
std::vector<std::size_t> sample_subgraph_indices(const KnowledgeGraph& kg, EntityId seed, std::size_t radius,
                                                 std::size_t max_triples, Rng& rng) {
  if (radius < 1) throw ConfigError("sample_subgraph: radius must be >= 1");
  if (max_triples < 1) throw ConfigError("sample_subgraph: max_triples must be >= 1");
  if (kg.adjacency(seed).empty()) {
    throw DataError("sample_subgraph: entity '" + kg.entity_name(seed) + "' has no incident triples");
  }
  std::unordered_map<EntityId, std::size_t> dist{{seed, 0}};
  std::deque<EntityId> frontier{seed};
  std::set<std::size_t> collected;
  while (!frontier.empty()) {
    const EntityId u = frontier.front();
    frontier.pop_front();
    const std::size_t du = dist[u];
    if (du >= radius) continue;
    for (const auto& e : kg.adjacency(u)) {
      collected.insert(e.triple);
      if (dist.emplace(e.neighbor, du + 1).second) frontier.push_back(e.neighbor);
    }
  }
  std::vector<std::size_t> out(collected.begin(), collected.end());
  if (out.size() <= max_triples) return out;

  std::vector<std::size_t> incident;
  for (const auto& e : kg.adjacency(seed)) incident.push_back(e.triple);
  std::sort(incident.begin(), incident.end());
  incident.erase(std::unique(incident.begin(), incident.end()), incident.end());
  std::uniform_int_distribution<std::size_t> pick(0, incident.size() - 1);
  const std::size_t anchor = incident[pick(rng)];

  std::vector<std::size_t> rest;
  rest.reserve(out.size() - 1);
  for (auto idx : out) {
    if (idx != anchor) rest.push_back(idx);
  }
  detail::partial_shuffle(rest, max_triples - 1, rng);
  rest.resize(max_triples - 1);
  rest.push_back(anchor);
  std::sort(rest.begin(), rest.end());
  return rest;
}

template <class Rng>
std::vector<Triple> sample_subgraph(const KnowledgeGraph& kg, EntityId seed, std::size_t radius,
                                    std::size_t max_triples, Rng& rng) {
  std::vector<Triple> out;
  for (auto idx : sample_subgraph_indices(kg, seed, radius, max_triples, rng)) out.push_back(kg.triples()[idx]);
  return out;
}

/// Train graph (shared id space with the source graph) plus held-out triples.
struct Split {
  KnowledgeGraph train;
  std::vector<Triple> valid_triples;
  std::vector<Triple> test_triples;
  std::vector<EntityId> unseen_entities;  // sorted; empty for transductive splits
};

/// Every triple touching an entity in `unseen` becomes a test triple; the
/// rest form the train graph.
inline Split split_holding_out(const KnowledgeGraph& kg, std::vector<EntityId> unseen_entities) {
  std::sort(unseen_entities.begin(), unseen_entities.end());
  unseen_entities.erase(std::unique(unseen_entities.begin(), unseen_entities.end()), unseen_entities.end());
  std::vector<bool> unseen(kg.num_entities(), false);
  for (auto e : unseen_entities) {
    kg.check_entity(e);
    unseen[e] = true;
  }
  std::vector<Triple> train, test;
  for (const auto& t : kg.triples()) {
    (unseen[t.head] || unseen[t.tail] ? test : train).push_back(t);
  }
  if (train.empty()) throw DataError("zero-shot split: no training triples remain");
  return Split{kg.with_triples(train), {}, std::move(test), std::move(unseen_entities)};
}

/// Holds out round(fraction * |E|) entities (at least one), sampled uniformly.
template <class Rng>
Split zero_shot_split(const KnowledgeGraph& kg, double entity_fraction, Rng& rng) {
  if (!(entity_fraction > 0.0 && entity_fraction <= 0.5)) {
    throw ConfigError("zero_shot_split: entity fraction must lie in (0, 0.5]");
  }
  std::vector<EntityId> entities(kg.num_entities());
  for (EntityId e = 0; e < entities.size(); ++e) entities[e] = e;
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(entity_fraction * static_cast<double>(entities.size()))));
  detail::partial_shuffle(entities, count, rng);
  entities.resize(count);
  return split_holding_out(kg, std::move(entities));
}

/// Transductive split: held-out triples only use entities that keep at least
/// one training triple.
template <class Rng>
Split random_split(const KnowledgeGraph& kg, double valid_fraction, double test_fraction, Rng& rng) {
  if (valid_fraction < 0.0 || test_fraction < 0.0 || valid_fraction + test_fraction >= 1.0) {
    throw ConfigError("random_split: fractions must be non-negative and sum below 1");
  }
  std::vector<std::size_t> order(kg.num_triples());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  detail::partial_shuffle(order, order.size(), rng);
  std::vector<std::size_t> degree(kg.num_entities());
  for (EntityId e = 0; e < kg.num_entities(); ++e) degree[e] = kg.degree(e);
  const auto n_valid = static_cast<std::size_t>(valid_fraction * static_cast<double>(order.size()));
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(order.size()));

  std::vector<Triple> train, valid, test;
  for (auto idx : order) {
    const Triple& t = kg.triples()[idx];
    const bool removable = t.head != t.tail && degree[t.head] > 1 && degree[t.tail] > 1;
    if (removable && test.size() < n_test) {
      test.push_back(t);
    } else if (removable && valid.size() < n_valid) {
      valid.push_back(t);
    } else {
      train.push_back(t);
      continue;
    }
    --degree[t.head];
    --degree[t.tail];
  }
  if (train.empty()) throw DataError("random_split: no training triples remain");
  return Split{kg.with_triples(train), std::move(valid), std::move(test), {}};
}

}  // namespace kgbilm
