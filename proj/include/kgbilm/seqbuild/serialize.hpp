#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"
#include "kgbilm/seqbuild/vocab.hpp"

namespace kgbilm {

/// Per-position role, used for kind embeddings and attention-mask rules.
enum class TokenKind : std::uint8_t { kText = 0, kEntity = 1, kRelation = 2, kSpecial = 3 };
inline constexpr std::size_t kNumTokenKinds = 4;

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<TokenKind> kinds;
  std::vector<std::optional<EntityId>> entity_of;
  std::vector<Triple> source_triples;

  std::size_t size() const noexcept { return ids.size(); }

  void push(TokenId id, TokenKind kind, std::optional<EntityId> entity = std::nullopt) {
    ids.push_back(id);
    kinds.push_back(kind);
    entity_of.push_back(entity);
  }
};

struct DescriptionFrame {
  EntityId entity = 0;
  std::vector<TokenId> words;
};

/// Structured input of a sequence: triple frames followed by description
/// frames. Augmentation edits this form before serialization.
struct SequenceSource {
  std::vector<Triple> triples;
  std::vector<DescriptionFrame> descriptions;
};

/// Distinct entities of `triples` in first-appearance order.
inline std::vector<EntityId> entities_in_order(std::span<const Triple> triples) {
  std::vector<EntityId> out;
  std::unordered_set<EntityId> seen;
  for (const auto& t : triples) {
    for (EntityId e : {t.head, t.tail}) {
      if (seen.insert(e).second) out.push_back(e);
    }
  }
  return out;
}

inline std::vector<TokenId> description_tokens(const KnowledgeGraph& kg, const Vocab& vocab, EntityId e) {
  std::vector<TokenId> out;
  if (auto d = kg.description(e)) {
    for (const auto& w : tokenize(*d)) out.push_back(vocab.text_token(w));
  }
  return out;
}

/// Source with a description frame for every entity of `triples` that has
/// a non-empty description, optionally restricted to `describe`.
inline SequenceSource make_source(std::vector<Triple> triples, const KnowledgeGraph& kg, const Vocab& vocab,
                                  std::optional<std::span<const EntityId>> describe = std::nullopt) {
  SequenceSource src;
  for (EntityId e : entities_in_order(triples)) {
    if (describe && std::find(describe->begin(), describe->end(), e) == describe->end()) continue;
    auto words = description_tokens(kg, vocab, e);
    if (!words.empty()) src.descriptions.push_back({e, std::move(words)});
  }
  src.triples = std::move(triples);
  return src;
}

/// Layout: BOS, per triple (head, relation, tail, SEP), per description
/// (entity, words..., SEP), EOS. The space left after the triple frames is
/// split equally among description frames; if the triple frames themselves do
/// not fit, the sequence is cut to max_len - 1 tokens and EOS appended.
inline TokenSequence serialize_source(const SequenceSource& src, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 4) throw ConfigError("serialize: max_len must be >= 4");
  TokenSequence seq;
  seq.source_triples = src.triples;
  seq.push(Vocab::kBos, TokenKind::kSpecial);
  for (const auto& t : src.triples) {
    seq.push(vocab.entity_token(t.head), TokenKind::kEntity, t.head);
    seq.push(vocab.relation_token(t.relation), TokenKind::kRelation);
    seq.push(vocab.entity_token(t.tail), TokenKind::kEntity, t.tail);
    seq.push(Vocab::kSep, TokenKind::kSpecial);
  }

  if (seq.size() + 1 > max_len) {
    seq.ids.resize(max_len - 1);
    seq.kinds.resize(max_len - 1);
    seq.entity_of.resize(max_len - 1);
    seq.push(Vocab::kEos, TokenKind::kSpecial);
    return seq;
  }

  const std::size_t budget = max_len - seq.size() - 1;
  std::size_t frames = src.descriptions.size();
  while (frames > 0 && budget / frames < 3) --frames;
  if (frames > 0) {
    const std::size_t words_each = budget / frames - 2;
    for (std::size_t k = 0; k < frames; ++k) {
      const auto& d = src.descriptions[k];
      if (d.words.empty()) continue;
      seq.push(vocab.entity_token(d.entity), TokenKind::kEntity, d.entity);
      const std::size_t n = std::min(words_each, d.words.size());
      for (std::size_t i = 0; i < n; ++i) seq.push(d.words[i], TokenKind::kText);
      seq.push(Vocab::kSep, TokenKind::kSpecial);
    }
  }
  seq.push(Vocab::kEos, TokenKind::kSpecial);
  return seq;
}

inline TokenSequence serialize(const std::vector<Triple>& triples, const KnowledgeGraph& kg, const Vocab& vocab,
                               std::size_t max_len) {
  if (triples.empty()) throw DataError("serialize: no triples");
  return serialize_source(make_source(triples, kg, vocab), vocab, max_len);
}

/// Single description frame: BOS, entity, words..., SEP, EOS.
inline TokenSequence serialize_description(EntityId e, const KnowledgeGraph& kg, const Vocab& vocab,
                                           std::size_t max_len) {
  SequenceSource src;
  src.descriptions.push_back({e, description_tokens(kg, vocab, e)});
  return serialize_source(src, vocab, max_len);
}

/// Triples read back from consecutive (entity, relation, entity, SEP) frames.
inline std::vector<Triple> recover_triples(const TokenSequence& seq, const Vocab& vocab) {
  std::vector<Triple> out;
  std::size_t i = 1;
  while (i + 3 < seq.size()) {
    const auto h = vocab.entity_of(seq.ids[i]);
    const auto r = vocab.relation_of(seq.ids[i + 1]);
    const auto t = vocab.entity_of(seq.ids[i + 2]);
    if (!h || !r || !t || seq.ids[i + 3] != Vocab::kSep) break;
    out.push_back({*h, *r, *t});
    i += 4;
  }
  return out;
}

}  // namespace kgbilm
