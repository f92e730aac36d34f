#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"

namespace kgbilm {

/// Per-entity structural importance used to bias which entity positions get
/// masked. `combined` lies in [0, 1].
struct ImportanceScores {
  std::vector<double> pagerank;
  std::vector<double> relation_entropy;
  std::vector<double> combined;
};

namespace detail {

inline std::vector<double> minmax_normalize(const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double span = *hi - *lo;
  if (span <= 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / span;
  return out;
}

}  // namespace detail

/// PageRank by power iteration on the undirected graph (each triple is an
/// edge; transition probability 1/degree). Mass of isolated entities is
/// spread uniformly.
inline std::vector<double> pagerank(const KnowledgeGraph& kg, double damping, int iters) {
  const std::size_t n = kg.num_entities();
  if (n == 0) throw DataError("pagerank: empty graph");
  if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("pagerank: damping must lie in (0, 1)");
  if (iters < 1) throw ConfigError("pagerank: iters must be >= 1");
  std::vector<double> pr(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (int it = 0; it < iters; ++it) {
    double dangling = 0.0;
    std::fill(next.begin(), next.end(), 0.0);
    for (EntityId u = 0; u < n; ++u) {
      const auto& adj = kg.adjacency(u);
      if (adj.empty()) {
        dangling += pr[u];
        continue;
      }
      const double share = pr[u] / static_cast<double>(adj.size());
      for (const auto& e : adj) next[e.neighbor] += share;
    }
    const double base = (1.0 - damping) / static_cast<double>(n) + damping * dangling / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = base + damping * next[i];
    pr.swap(next);
  }
  return pr;
}

/// Shannon entropy (nats) of the relation-type histogram over an entity's
/// incident edges; 0 for isolated entities.
inline double relation_entropy(const KnowledgeGraph& kg, EntityId e) {
  const auto& adj = kg.adjacency(e);
  if (adj.empty()) return 0.0;
  std::map<RelationId, std::size_t> counts;
  for (const auto& edge : adj) ++counts[edge.relation];
  double h = 0.0;
  const double total = static_cast<double>(adj.size());
  for (const auto& [rel, c] : counts) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

/// combined = w * minmax(pagerank) + (1 - w) * minmax(relation_entropy).
inline ImportanceScores importance_scores(const KnowledgeGraph& kg, double damping = 0.85, int iters = 100,
                                          double pagerank_weight = 0.5) {
  if (kg.num_entities() == 0) throw DataError("importance_scores: empty graph");
  ImportanceScores s;
  s.pagerank = pagerank(kg, damping, iters);
  s.relation_entropy.resize(kg.num_entities());
  for (EntityId e = 0; e < kg.num_entities(); ++e) s.relation_entropy[e] = relation_entropy(kg, e);
  const auto pr = detail::minmax_normalize(s.pagerank);
  const auto ent = detail::minmax_normalize(s.relation_entropy);
  s.combined.resize(kg.num_entities());
  for (std::size_t i = 0; i < s.combined.size(); ++i) {
    s.combined[i] = pagerank_weight * pr[i] + (1.0 - pagerank_weight) * ent[i];
  }
  return s;
}

}  // namespace kgbilm
