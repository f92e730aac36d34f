#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgbilm/bka/config.hpp"
#include "kgbilm/kgstore/reachability.hpp"
#include "kgbilm/numcore/ops.hpp"
#include "kgbilm/seqbuild/serialize.hpp"

namespace kgbilm {

/// N x N attention pattern; `allowed(i, j)` means query i may attend to key j
/// (additive value 0), otherwise the additive value is -inf.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t n, bool allow = false) : n_(n), allowed_(n * n, allow ? 1 : 0) {}

  std::size_t size() const noexcept { return n_; }
  bool allowed(std::size_t i, std::size_t j) const { return allowed_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool allow) { allowed_[i * n_ + j] = allow ? 1 : 0; }

  /// Dense additive form; -inf is represented by the lowest finite value.
  template <class T>
  BasicTensor<T> additive() const {
    auto out = BasicTensor<T>::matrix(n_, n_);
    for (std::size_t k = 0; k < allowed_.size(); ++k) out[k] = allowed_[k] ? T{0} : masked_value<T>();
    return out;
  }

  /// One line per query row: '0' for allowed, '-' for masked.
  std::string to_grid() const {
    std::string out;
    out.reserve(n_ * (n_ + 1));
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) out += allowed(i, j) ? '0' : '-';
      out += '\n';
    }
    return out;
  }

  bool symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if (allowed(i, j) != allowed(j, i)) return false;
    return true;
  }

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> allowed_;
};

/// Mask from an arbitrary pair predicate.
inline AttentionMask build_mask(std::size_t n, const std::function<bool(std::size_t, std::size_t)>& may_interact) {
  AttentionMask m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, may_interact(i, j));
  return m;
}

inline AttentionMask causal_mask(std::size_t n) {
  if (n < 1) throw ConfigError("causal_mask: N must be >= 1");
  return build_mask(n, [](std::size_t i, std::size_t j) { return j <= i; });
}

inline bool within_window(std::size_t i, std::size_t j, std::size_t window) {
  const std::size_t d = i > j ? i - j : j - i;
  return d <= window;
}

/// A pair may interact if (1) it lies within the local window, (2) both are
/// non-entity tokens and text attention is bidirectional, or (3) both carry
/// entities joined by a path of at most hop_threshold edges.
inline bool can_interact(std::size_t i, std::size_t j, const TokenSequence& seq, const KnowledgeGraph& kg,
                         const BkaConfig& cfg) {
  if (within_window(i, j, cfg.local_window)) return true;
  const auto& ei = seq.entity_of[i];
  const auto& ej = seq.entity_of[j];
  if (cfg.text_bidirectional && !ei && !ej) return true;
  if (ei && ej) return k_hop_reachable(kg, *ei, *ej, cfg.hop_threshold);
  return false;
}

/// can_interact as a pair predicate over `seq`, with one bounded BFS per
/// distinct entity computed up front.
inline std::function<bool(std::size_t, std::size_t)> bka_predicate(const TokenSequence& seq, const KnowledgeGraph& kg,
                                                                   const BkaConfig& cfg) {
  auto reach = std::make_shared<std::unordered_map<EntityId, std::unordered_map<EntityId, std::size_t>>>();
  for (const auto& e : seq.entity_of) {
    if (e && !reach->contains(*e)) reach->emplace(*e, bounded_bfs(kg, *e, cfg.hop_threshold));
  }
  return [&seq, cfg, reach](std::size_t i, std::size_t j) {
    if (within_window(i, j, cfg.local_window)) return true;
    const auto& ei = seq.entity_of[i];
    const auto& ej = seq.entity_of[j];
    if (cfg.text_bidirectional && !ei && !ej) return true;
    if (ei && ej) return reach->at(*ei).contains(*ej);
    return false;
  };
}

inline AttentionMask build_bka_mask(const TokenSequence& seq, const KnowledgeGraph& kg, const BkaConfig& cfg) {
  if (seq.size() > cfg.max_len) {
    throw ConfigError("build_bka_mask: sequence length " + std::to_string(seq.size()) + " exceeds max_len " +
                      std::to_string(cfg.max_len));
  }
  return build_mask(seq.size(), bka_predicate(seq, kg, cfg));
}

}  // namespace kgbilm
