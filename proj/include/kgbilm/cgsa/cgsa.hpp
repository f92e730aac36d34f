#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <unordered_set>
#include <vector>

#include "kgbilm/kgstore/reachability.hpp"
#include "kgbilm/numcore/ops.hpp"
#include "kgbilm/seqbuild/serialize.hpp"

namespace kgbilm {

enum class PoolMethod { kMean, kBos };

struct CgsaConfig {
  double p_aug = 0.3;
  double tau = 0.07;
  PoolMethod pooling = PoolMethod::kMean;
  bool symmetric = false;
  std::size_t drop_radius = 2;  // hop radius a dropped triple must stay within
  std::size_t max_span = 3;     // longest deleted description span
};

struct ViewPair {
  TokenSequence view1, view2;
  std::vector<Triple> origin;
};

namespace detail {

inline EntityId uf_find(std::vector<EntityId>& parent, EntityId x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

/// True iff the triples form one connected component over their entities.
inline bool triples_connected(std::span<const Triple> triples) {
  if (triples.empty()) return true;
  std::vector<EntityId> ents;
  for (const auto& t : triples) {
    ents.push_back(t.head);
    ents.push_back(t.tail);
  }
  std::sort(ents.begin(), ents.end());
  ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
  auto idx = [&](EntityId e) { return static_cast<EntityId>(std::lower_bound(ents.begin(), ents.end(), e) - ents.begin()); };
  std::vector<EntityId> parent(ents.size());
  std::iota(parent.begin(), parent.end(), EntityId{0});
  for (const auto& t : triples) parent[uf_find(parent, idx(t.head))] = uf_find(parent, idx(t.tail));
  const EntityId root = uf_find(parent, 0);
  for (EntityId i = 0; i < ents.size(); ++i)
    if (uf_find(parent, i) != root) return false;
  return true;
}

}  // namespace detail

/// Triple k of `triples` may be dropped when at least one other triple
/// remains, the remainder stays connected, and both entities of k lie within
/// `radius` hops of some entity of the remainder.
inline bool can_drop_triple(std::span<const Triple> triples, std::size_t k, const KnowledgeGraph& kg,
                            std::size_t radius) {
  if (triples.size() < 2) return false;
  std::vector<Triple> rest;
  for (std::size_t i = 0; i < triples.size(); ++i)
    if (i != k) rest.push_back(triples[i]);
  if (!detail::triples_connected(rest)) return false;
  std::unordered_set<EntityId> remaining;
  for (const auto& t : rest) {
    remaining.insert(t.head);
    remaining.insert(t.tail);
  }
  for (EntityId e : {triples[k].head, triples[k].tail}) {
    bool near = false;
    for (const auto& [other, dist] : bounded_bfs(kg, e, radius)) {
      if (remaining.contains(other)) {
        near = true;
        break;
      }
    }
    if (!near) return false;
  }
  return true;
}

/// Corrupted view of `origin`. Three independent decisions, each taken with
/// probability p_aug and in this order: drop one random triple (if allowed),
/// delete a span of 1..max_span words from one random description, shuffle
/// the triple frames. The result is then serialized. `describe` limits which
/// entities contribute description frames (all of them by default).
template <class Rng>
TokenSequence augment(const std::vector<Triple>& origin, const KnowledgeGraph& kg, const Vocab& vocab,
                      const CgsaConfig& cfg, std::size_t max_len, Rng& rng,
                      std::optional<std::span<const EntityId>> describe = std::nullopt) {
  if (origin.empty()) throw DataError("augment: empty origin");
  if (cfg.p_aug < 0.0 || cfg.p_aug > 1.0) throw ConfigError("augment: p_aug must lie in [0, 1]");
  SequenceSource src = make_source(origin, kg, vocab, describe);
  std::bernoulli_distribution apply(cfg.p_aug);

  if (apply(rng)) {
    std::uniform_int_distribution<std::size_t> pick(0, src.triples.size() - 1);
    const std::size_t k = pick(rng);
    if (can_drop_triple(src.triples, k, kg, cfg.drop_radius)) {
      src.triples.erase(src.triples.begin() + static_cast<std::ptrdiff_t>(k));
      const auto kept = entities_in_order(src.triples);
      std::erase_if(src.descriptions, [&](const DescriptionFrame& d) {
        return std::find(kept.begin(), kept.end(), d.entity) == kept.end();
      });
    }
  }

  if (apply(rng) && !src.descriptions.empty() && cfg.max_span > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, src.descriptions.size() - 1);
    auto& words = src.descriptions[pick(rng)].words;
    if (!words.empty()) {
      std::uniform_int_distribution<std::size_t> len_dist(1, std::min(cfg.max_span, words.size()));
      const std::size_t len = len_dist(rng);
      std::uniform_int_distribution<std::size_t> start_dist(0, words.size() - len);
      const auto start = static_cast<std::ptrdiff_t>(start_dist(rng));
      words.erase(words.begin() + start, words.begin() + start + static_cast<std::ptrdiff_t>(len));
    }
  }

  if (apply(rng)) std::shuffle(src.triples.begin(), src.triples.end(), rng);

  return serialize_source(src, vocab, max_len);
}

/// Sequence embedding: mean over non-PAD rows (or row 0 for kBos), scaled to
/// unit length. Returns a [1 x d] row.
template <class T>
Var<T> pool(Var<T> hidden, const TokenSequence& seq, PoolMethod method) {
  if (hidden.value().rows() != seq.size() || seq.size() == 0) {
    throw ShapeError("pool: " + std::to_string(hidden.value().rows()) + " hidden rows for sequence of length " +
                     std::to_string(seq.size()));
  }
  std::vector<std::size_t> rows;
  if (method == PoolMethod::kBos) {
    rows.push_back(0);
  } else {
    for (std::size_t i = 0; i < seq.size(); ++i)
      if (seq.ids[i] != Vocab::kPad) rows.push_back(i);
    if (rows.empty()) throw DataError("pool: every position is padding");
  }
  return l2_normalize_rows(mean_rows(gather_rows(hidden, std::span<const std::size_t>(rows))));
}

inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("cosine_sim: length mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw NumericalError("cosine_sim: zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

/// InfoNCE over a batch: anchor k of `z1` against every row of `z2`, the
/// positive being row k. Similarities are cosines scaled by 1/tau. With
/// `symmetric`, the loss is averaged with the z2-anchored direction.
template <class T>
Var<T> cgsa_loss(Var<T> z1, Var<T> z2, double tau, bool symmetric = false) {
  if (!(tau > 0.0)) throw ConfigError("cgsa_loss: tau must be positive");
  const std::size_t b = z1.value().rows();
  if (b == 0 || z2.value().shape() != z1.value().shape()) throw_shape("cgsa_loss", z1.value().shape(), z2.value().shape());
  auto n1 = l2_normalize_rows(z1);
  auto n2 = l2_normalize_rows(z2);
  auto logits = scale(matmul_nt(n1, n2), static_cast<T>(1.0 / tau));
  if (!logits.value().all_finite()) throw NumericalError("cgsa_loss: non-finite similarity");
  std::vector<std::size_t> targets(b);
  std::iota(targets.begin(), targets.end(), std::size_t{0});
  auto loss = cross_entropy(logits, std::span<const std::size_t>(targets));
  if (!symmetric) return loss;
  auto back = cross_entropy(transpose(logits), std::span<const std::size_t>(targets));
  return scale(add(loss, back), T{0.5});
}

}  // namespace kgbilm
