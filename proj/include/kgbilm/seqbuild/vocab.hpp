#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"
#include "kgbilm/util/hash.hpp"

namespace kgbilm {

using TokenId = std::uint32_t;

enum class TokenClass : std::uint8_t { kSpecial, kText, kEntity, kRelation };

inline std::string_view to_string(TokenClass c) {
  switch (c) {
    case TokenClass::kSpecial: return "special";
    case TokenClass::kText: return "text";
    case TokenClass::kEntity: return "entity";
    case TokenClass::kRelation: return "relation";
  }
  return "?";
}

/// Lowercased ASCII words; any byte that is not alphanumeric (and not part of
/// a multi-byte UTF-8 sequence) separates words and is dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch) || ch >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

/// Joint vocabulary: five specials, text words (UNK first), one symbol per
/// entity, one symbol per relation, laid out in that order.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr TokenId kNumSpecials = 5;
  static constexpr TokenId kUnk = kNumSpecials;

  Vocab() = default;

  /// `words` excludes UNK; entity/relation names are indexed by their ids.
  Vocab(std::vector<std::string> words, std::vector<std::string> entity_names,
        std::vector<std::string> relation_names) {
    surfaces_ = {"<pad>", "<bos>", "<eos>", "<sep>", "<mask>", "<unk>"};
    classes_.assign(surfaces_.size(), TokenClass::kSpecial);
    classes_.back() = TokenClass::kText;
    for (auto& w : words) {
      text_index_.emplace(w, static_cast<TokenId>(surfaces_.size()));
      surfaces_.push_back(std::move(w));
      classes_.push_back(TokenClass::kText);
    }
    entity_begin_ = static_cast<TokenId>(surfaces_.size());
    for (auto& n : entity_names) {
      surfaces_.push_back(std::move(n));
      classes_.push_back(TokenClass::kEntity);
    }
    relation_begin_ = static_cast<TokenId>(surfaces_.size());
    for (auto& n : relation_names) {
      surfaces_.push_back(std::move(n));
      classes_.push_back(TokenClass::kRelation);
    }
  }

  std::size_t size() const noexcept { return surfaces_.size(); }
  std::size_t num_text() const noexcept { return entity_begin_ - kNumSpecials; }  // includes UNK
  std::size_t num_entities() const noexcept { return relation_begin_ - entity_begin_; }
  std::size_t num_relations() const noexcept { return surfaces_.size() - relation_begin_; }
  TokenId entity_begin() const noexcept { return entity_begin_; }
  TokenId relation_begin() const noexcept { return relation_begin_; }

  TokenId text_token(std::string_view word) const {
    auto it = text_index_.find(std::string(word));
    return it == text_index_.end() ? kUnk : it->second;
  }
  bool has_word(std::string_view word) const { return text_index_.contains(std::string(word)); }

  TokenId entity_token(EntityId e) const {
    if (e >= num_entities()) throw DataError("vocab: entity id " + std::to_string(e) + " has no symbol");
    return entity_begin_ + e;
  }
  TokenId relation_token(RelationId r) const {
    if (r >= num_relations()) throw DataError("vocab: relation id " + std::to_string(r) + " has no symbol");
    return relation_begin_ + r;
  }
  std::optional<EntityId> entity_of(TokenId t) const {
    if (t >= entity_begin_ && t < relation_begin_) return t - entity_begin_;
    return std::nullopt;
  }
  std::optional<RelationId> relation_of(TokenId t) const {
    if (t >= relation_begin_ && t < surfaces_.size()) return t - relation_begin_;
    return std::nullopt;
  }

  TokenClass token_class(TokenId t) const { return classes_.at(t); }
  const std::string& surface(TokenId t) const { return surfaces_.at(t); }

  /// `class<TAB>surface<TAB>id` per symbol, in id order.
  std::string to_text() const {
    std::string out;
    for (TokenId t = 0; t < surfaces_.size(); ++t) {
      out += to_string(classes_[t]);
      out += '\t';
      out += surfaces_[t];
      out += '\t';
      out += std::to_string(t);
      out += '\n';
    }
    return out;
  }

  std::uint64_t content_hash() const { return fnv1a64(to_text()); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary " + path);
    out << to_text();
  }

  static Vocab parse(std::istream& in, const std::string& source = "vocab") {
    std::vector<std::string> words, entities, relations;
    std::string line;
    TokenId expected = 0;
    int stage = 0;  // 0 specials, 1 text, 2 entity, 3 relation
    static constexpr std::array<std::string_view, 6> kFixed{"<pad>", "<bos>", "<eos>", "<sep>", "<mask>", "<unk>"};
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = line.rfind('\t');
      if (t1 == std::string::npos || t1 == t2) {
        throw DataError(source + ": line for id " + std::to_string(expected) + " is not class<TAB>surface<TAB>id");
      }
      const std::string cls = line.substr(0, t1);
      std::string surface = line.substr(t1 + 1, t2 - t1 - 1);
      if (line.substr(t2 + 1) != std::to_string(expected)) {
        throw DataError(source + ": ids must be contiguous, expected " + std::to_string(expected));
      }
      int want;
      if (cls == "special") want = 0;
      else if (cls == "text") want = 1;
      else if (cls == "entity") want = 2;
      else if (cls == "relation") want = 3;
      else throw DataError(source + ": unknown symbol class '" + cls + "'");
      if (expected < kFixed.size()) {
        if (surface != kFixed[expected] || want != (expected == kUnk ? 1 : 0)) {
          throw DataError(source + ": reserved id " + std::to_string(expected) + " must be " + std::string(kFixed[expected]));
        }
      } else {
        if (want < stage || want == 0) throw DataError(source + ": symbol classes out of order at id " + std::to_string(expected));
        stage = want;
        (want == 1 ? words : want == 2 ? entities : relations).push_back(std::move(surface));
      }
      ++expected;
    }
    if (expected < kFixed.size()) throw DataError(source + ": truncated vocabulary");
    return Vocab(std::move(words), std::move(entities), std::move(relations));
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary " + path);
    return parse(in, path);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.surfaces_ == b.surfaces_ && a.classes_ == b.classes_; }

 private:
  std::vector<std::string> surfaces_;
  std::vector<TokenClass> classes_;
  std::unordered_map<std::string, TokenId> text_index_;
  TokenId entity_begin_ = kNumSpecials + 1;
  TokenId relation_begin_ = kNumSpecials + 1;
};

/// Words from all descriptions with frequency >= min_freq (sorted), plus one
/// symbol per entity and relation of `kg`.
inline Vocab build_vocab(const KnowledgeGraph& kg, std::size_t min_freq = 1) {
  if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    if (auto d = kg.description(e)) {
      for (auto& w : tokenize(*d)) ++freq[w];
    }
  }
  std::vector<std::string> words;
  for (auto& [w, c] : freq) {
    if (c >= min_freq) words.push_back(w);
  }
  std::vector<std::string> entities, relations;
  for (EntityId e = 0; e < kg.num_entities(); ++e) entities.push_back(kg.entity_name(e));
  for (RelationId r = 0; r < kg.num_relations(); ++r) relations.push_back(kg.relation_name(r));
  return Vocab(std::move(words), std::move(entities), std::move(relations));
}

}  // namespace kgbilm
