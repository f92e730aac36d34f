#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "kgbilm/kgstore/importance.hpp"
#include "kgbilm/numcore/ops.hpp"
#include "kgbilm/seqbuild/serialize.hpp"

namespace kgbilm {

struct MaskedBatch {
  TokenSequence masked_seq;
  std::vector<std::size_t> mask_set;  // sorted, unique, all >= 1
  std::vector<TokenId> targets;       // original ids at mask_set
  double gamma = 0.0;                 // |mask_set| / N
};

/// Sampling weight of position `i`: 0 for special tokens, 1 + combined
/// importance for entity tokens, 1 otherwise.
inline double mask_weight(const TokenSequence& seq, std::size_t i, const ImportanceScores& importance) {
  if (i == 0) return 0.0;
  switch (seq.kinds[i]) {
    case TokenKind::kSpecial:
      return 0.0;
    case TokenKind::kEntity:
      return 1.0 + importance.combined.at(*seq.entity_of[i]);
    default:
      return 1.0;
  }
}

/// Draws max(1, round(gamma (N-1))) positions without replacement, each draw
/// proportional to mask_weight among the remaining positions. The count is
/// capped by the number of positions with positive weight. Sorted result.
template <class Rng>
std::vector<std::size_t> sample_mask_set(const TokenSequence& seq, double gamma, const ImportanceScores& importance,
                                         Rng& rng) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("sample_mask_set: gamma must lie in (0, 1)");
  const std::size_t n = seq.size();
  if (n < 2) throw DataError("sample_mask_set: sequence shorter than 2 tokens");
  std::vector<double> w(n);
  std::size_t maskable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = mask_weight(seq, i, importance);
    maskable += w[i] > 0.0;
  }
  if (maskable == 0) throw DataError("sample_mask_set: no maskable positions");
  const auto wanted = static_cast<std::size_t>(std::llround(gamma * static_cast<double>(n - 1)));
  const std::size_t count = std::min(std::max<std::size_t>(1, wanted), maskable);

  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    double total = 0.0;
    for (double x : w) total += x;
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] <= 0.0) continue;
      pick = i;
      if (r < w[i]) break;
      r -= w[i];
    }
    out.push_back(pick);
    w[pick] = 0.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Replaces every position of `mask_set` with MASK. Kinds and entity links
/// are kept so the attention mask of the masked sequence is unchanged.
inline MaskedBatch mask_tokens(const TokenSequence& seq, std::vector<std::size_t> mask_set) {
  std::sort(mask_set.begin(), mask_set.end());
  if (std::adjacent_find(mask_set.begin(), mask_set.end()) != mask_set.end()) {
    throw DataError("mask_tokens: duplicate mask position");
  }
  if (!mask_set.empty() && (mask_set.front() == 0 || mask_set.back() >= seq.size())) {
    throw DataError("mask_tokens: mask positions must lie in [1, " + std::to_string(seq.size()) + ")");
  }
  MaskedBatch b;
  b.masked_seq = seq;
  for (std::size_t i : mask_set) {
    b.targets.push_back(seq.ids[i]);
    b.masked_seq.ids[i] = Vocab::kMask;
  }
  b.gamma = seq.size() == 0 ? 0.0 : static_cast<double>(mask_set.size()) / static_cast<double>(seq.size());
  b.mask_set = std::move(mask_set);
  return b;
}

/// Rows of `h` [n x d] mapped to vocabulary logits: h W_P^T + b_P.
template <class T>
Var<T> project_logits(Var<T> h, Var<T> output_weight, Var<T> output_bias) {
  return add(matmul_nt(h, output_weight), output_bias);
}

/// Mean negative log-likelihood of each masked target, predicted from the
/// hidden state one position to its left.
template <class T>
Var<T> kmp_loss(Var<T> hidden, const MaskedBatch& batch, Var<T> output_weight, Var<T> output_bias) {
  if (batch.mask_set.empty()) throw DataError("kmp_loss: empty mask set");
  std::vector<std::size_t> rows, targets;
  for (std::size_t k = 0; k < batch.mask_set.size(); ++k) {
    const std::size_t i = batch.mask_set[k];
    if (i == 0 || i > hidden.value().rows()) throw DataError("kmp_loss: mask position out of range");
    rows.push_back(i - 1);
    targets.push_back(batch.targets[k]);
  }
  auto logits = project_logits(gather_rows(hidden, std::span<const std::size_t>(rows)), output_weight, output_bias);
  return cross_entropy(logits, std::span<const std::size_t>(targets));
}

}  // namespace kgbilm
