#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <unordered_map>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"

namespace kgbilm {

/// Hop bound meaning "no limit".
inline constexpr std::size_t kUnboundedHops = std::numeric_limits<std::size_t>::max();

/// Undirected hop distances from `source` to every entity within `max_hops`
/// (source included at distance 0).
inline std::unordered_map<EntityId, std::size_t> bounded_bfs(const KnowledgeGraph& kg, EntityId source,
                                                            std::size_t max_hops) {
  kg.check_entity(source);
  std::unordered_map<EntityId, std::size_t> dist{{source, 0}};
  std::deque<EntityId> frontier{source};
  while (!frontier.empty()) {
    const EntityId u = frontier.front();
    frontier.pop_front();
    const std::size_t du = dist[u];
    if (du >= max_hops) continue;
    for (const auto& e : kg.adjacency(u)) {
      if (dist.emplace(e.neighbor, du + 1).second) frontier.push_back(e.neighbor);
    }
  }
  return dist;
}

/// True iff an undirected path of at most `hops` edges joins `a` and `b`.
inline bool k_hop_reachable(const KnowledgeGraph& kg, EntityId a, EntityId b, std::size_t hops) {
  kg.check_entity(a);
  kg.check_entity(b);
  if (a == b) return true;
  if (hops == 0) return false;
  std::unordered_map<EntityId, std::size_t> dist{{a, 0}};
  std::deque<EntityId> frontier{a};
  while (!frontier.empty()) {
    const EntityId u = frontier.front();
    frontier.pop_front();
    const std::size_t du = dist[u];
    if (du >= hops) continue;
    for (const auto& e : kg.adjacency(u)) {
      if (e.neighbor == b) return true;
      if (dist.emplace(e.neighbor, du + 1).second) frontier.push_back(e.neighbor);
    }
  }
  return false;
}

}  // namespace kgbilm
