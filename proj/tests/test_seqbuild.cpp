#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "kgbilm/seqbuild/serialize.hpp"
#include "kgbilm/seqbuild/vocab.hpp"

namespace kgbilm {
namespace {

KnowledgeGraph toy() {
  KnowledgeGraph kg;
  kg.add_triple("paris", "capital_of", "france");
  kg.add_triple("france", "member_of", "eu");
  return kg;
}

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("Hello, World!  it's 2024"),
            (std::vector<std::string>{"hello", "world", "it", "s", "2024"}));
}

TEST(BuildVocab, NoDescriptionsKeepsOnlyUnk) {
  auto kg = toy();
  auto vocab = build_vocab(kg, 1);
  EXPECT_EQ(vocab.num_text(), 1u);
  EXPECT_EQ(vocab.num_entities(), 3u);
  EXPECT_EQ(vocab.num_relations(), 2u);
  EXPECT_EQ(vocab.size(), 1u + 3u + 2u + 5u);
  EXPECT_EQ(vocab.text_token("anything"), Vocab::kUnk);
}

TEST(BuildVocab, WordBelowMinFreqMapsToUnk) {
  auto kg = toy();
  kg.set_description(0, "city city river");
  auto vocab = build_vocab(kg, 2);
  EXPECT_TRUE(vocab.has_word("city"));
  EXPECT_FALSE(vocab.has_word("river"));
  EXPECT_EQ(vocab.text_token("river"), Vocab::kUnk);
}

TEST(BuildVocab, SizeCountsEveryClass) {
  auto kg = toy();
  kg.set_description(0, "a b c d e");
  kg.set_description(1, "f g h i j a b");
  auto vocab = build_vocab(kg, 1);
  std::set<std::string> words;
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    if (auto d = kg.description(e)) {
      for (auto& w : tokenize(*d)) words.insert(w);
    }
  }
  ASSERT_EQ(words.size(), 10u);
  EXPECT_EQ(vocab.size(), words.size() + 3 + 2 + 5 + 1);
  EXPECT_EQ(vocab.size(), 21u);
}

TEST(BuildVocab, IdRangesAreDisjoint) {
  auto kg = toy();
  kg.set_description(2, "union of states");
  auto v = build_vocab(kg, 1);
  EXPECT_NE(Vocab::kMask, Vocab::kPad);
  for (TokenId t = 0; t < v.size(); ++t) {
    const int classes = (t < Vocab::kNumSpecials) + (v.token_class(t) == TokenClass::kText) +
                        v.entity_of(t).has_value() + v.relation_of(t).has_value();
    EXPECT_EQ(classes, 1) << t;
  }
}

TEST(VocabFile, ReloadIsBitExact) {
  auto kg = toy();
  kg.set_description(0, "the city of light");
  auto v = build_vocab(kg, 1);
  std::istringstream in(v.to_text());
  auto reloaded = Vocab::parse(in);
  EXPECT_EQ(reloaded, v);
  EXPECT_EQ(reloaded.to_text(), v.to_text());
  EXPECT_EQ(reloaded.content_hash(), v.content_hash());
}

TEST(VocabFile, RejectsGapsAndDisorder) {
  std::istringstream gap("special\t<pad>\t0\nspecial\t<bos>\t2\n");
  EXPECT_THROW(Vocab::parse(gap), DataError);
  auto v = build_vocab(toy(), 1);
  std::string text = v.to_text();
  text += "text\tlate\t" + std::to_string(v.size()) + "\n";
  std::istringstream disorder(text);
  EXPECT_THROW(Vocab::parse(disorder), DataError);
}

TEST(Serialize, SingleTripleLayout) {
  auto kg = toy();
  auto v = build_vocab(kg, 1);
  auto seq = serialize({kg.triples()[0]}, kg, v, 16);
  const auto h = v.entity_token(0), r = v.relation_token(0), t = v.entity_token(1);
  EXPECT_EQ(seq.ids, (std::vector<TokenId>{Vocab::kBos, h, r, t, Vocab::kSep, Vocab::kEos}));
  EXPECT_EQ(seq.entity_of[1], 0u);
  EXPECT_EQ(seq.entity_of[3], 1u);
  EXPECT_FALSE(seq.entity_of[2].has_value());
}

TEST(Serialize, HeadDescriptionFrame) {
  auto kg = toy();
  kg.set_description(0, "city of light");
  auto v = build_vocab(kg, 1);
  auto seq = serialize({kg.triples()[0]}, kg, v, 16);
  const auto h = v.entity_token(0), r = v.relation_token(0), t = v.entity_token(1);
  const std::vector<TokenId> expected{Vocab::kBos, h, r, t, Vocab::kSep, h, v.text_token("city"),
                                      v.text_token("of"), v.text_token("light"), Vocab::kSep, Vocab::kEos};
  EXPECT_EQ(seq.ids, expected);
  EXPECT_EQ(seq.kinds[6], TokenKind::kText);
  EXPECT_EQ(seq.entity_of[5], 0u);
}

TEST(Serialize, HardTruncationKeepsEos) {
  auto kg = toy();
  auto v = build_vocab(kg, 1);
  auto seq = serialize({kg.triples()[0]}, kg, v, 5);
  EXPECT_EQ(seq.ids, (std::vector<TokenId>{Vocab::kBos, v.entity_token(0), v.relation_token(0),
                                           v.entity_token(1), Vocab::kEos}));
}

TEST(Serialize, RejectsTinyMaxLenAndEmptyInput) {
  auto kg = toy();
  auto v = build_vocab(kg, 1);
  EXPECT_THROW(serialize({kg.triples()[0]}, kg, v, 3), ConfigError);
  EXPECT_THROW(serialize({}, kg, v, 16), DataError);
}

TEST(Serialize, DescriptionBudgetSplitEqually) {
  auto kg = toy();
  kg.set_description(0, "one two three four five six seven eight nine ten");
  kg.set_description(1, "alpha beta gamma delta epsilon zeta eta theta iota kappa");
  auto v = build_vocab(kg, 1);
  // 6 tokens of triple frame + EOS; 13 remaining -> 6 per entity -> 4 words each.
  auto seq = serialize({kg.triples()[0]}, kg, v, 19);
  EXPECT_EQ(seq.size(), 6u + 6u + 6u);
  std::size_t words = 0;
  for (auto k : seq.kinds) words += k == TokenKind::kText;
  EXPECT_EQ(words, 8u);
}

// Random triple lists over a small graph: untruncated sequences recover their
// source triples exactly, distinct inputs stay distinct, entity linkage holds.
TEST(Serialize, RoundTripInjectivityAndLinkage) {
  KnowledgeGraph kg;
  for (int i = 0; i < 12; ++i) kg.add_entity("e" + std::to_string(i));
  for (int r = 0; r < 3; ++r) kg.add_relation("r" + std::to_string(r));
  for (int i = 0; i < 12; i += 3) kg.set_description(static_cast<EntityId>(i), "word" + std::to_string(i) + " common");
  auto v = build_vocab(kg, 1);
  std::mt19937_64 rng(6);
  std::set<std::vector<TokenId>> seen_seqs;
  std::set<std::vector<Triple>> seen_inputs;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Triple> triples;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) {
      triples.push_back({static_cast<EntityId>(rng() % 12), static_cast<RelationId>(rng() % 3),
                         static_cast<EntityId>(rng() % 12)});
    }
    auto seq = serialize(triples, kg, v, 128);
    EXPECT_EQ(recover_triples(seq, v), triples);
    if (seen_inputs.insert(triples).second) {
      EXPECT_TRUE(seen_seqs.insert(seq.ids).second);
    }
    EXPECT_EQ(seq.ids.front(), Vocab::kBos);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      EXPECT_EQ(seq.kinds[i] == TokenKind::kEntity, seq.entity_of[i].has_value());
      if (seq.entity_of[i]) {
        EXPECT_EQ(v.entity_token(*seq.entity_of[i]), seq.ids[i]);
      }
    }
  }
}

}  // namespace
}  // namespace kgbilm
