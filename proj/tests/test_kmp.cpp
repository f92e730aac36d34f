#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "kgbilm/bka/encoder.hpp"
#include "kgbilm/kmp/kmp.hpp"
#include "kgbilm/numcore/grad_check.hpp"

namespace kgbilm {
namespace {

// BOS, then `body` as (kind, entity) pairs, then EOS.
TokenSequence make_seq(const std::vector<std::pair<TokenKind, std::optional<EntityId>>>& body) {
  TokenSequence s;
  s.push(Vocab::kBos, TokenKind::kSpecial);
  for (const auto& [kind, e] : body) {
    const TokenId id = kind == TokenKind::kSpecial ? Vocab::kSep : static_cast<TokenId>(6 + s.size());
    s.push(id, kind, e);
  }
  s.push(Vocab::kEos, TokenKind::kSpecial);
  return s;
}

ImportanceScores flat_importance(std::size_t n, double value) {
  ImportanceScores s;
  s.pagerank.assign(n, 1.0 / static_cast<double>(n));
  s.relation_entropy.assign(n, 0.0);
  s.combined.assign(n, value);
  return s;
}

BasicTensor<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  auto m = BasicTensor<double>::matrix(r, c);
  for (auto& v : m.storage()) v = dist(rng);
  return m;
}

// log-sum-exp cross-entropy of one logit row.
double nll(const std::vector<double>& logits, std::size_t target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[target] - mx - std::log(z));
}

TEST(SampleMaskSet, CountAndRange) {
  auto s = make_seq({{TokenKind::kText, {}}, {TokenKind::kEntity, 0}, {TokenKind::kRelation, {}},
                     {TokenKind::kEntity, 1}, {TokenKind::kSpecial, {}}, {TokenKind::kText, {}},
                     {TokenKind::kText, {}}, {TokenKind::kText, {}}, {TokenKind::kText, {}}});
  ASSERT_EQ(s.size(), 11u);
  auto imp = flat_importance(2, 0.5);
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_mask_set(s, 0.15, imp, rng).size(), 2u);  // round(1.5) = 2
  EXPECT_EQ(sample_mask_set(s, 0.01, imp, rng).size(), 1u);
  EXPECT_EQ(sample_mask_set(s, 0.95, imp, rng).size(), 8u);  // capped by maskable positions
  EXPECT_THROW(sample_mask_set(s, 0.0, imp, rng), ConfigError);
  EXPECT_THROW(sample_mask_set(s, 1.0, imp, rng), ConfigError);
  TokenSequence only_specials = make_seq({{TokenKind::kSpecial, {}}});
  EXPECT_THROW(sample_mask_set(only_specials, 0.5, imp, rng), DataError);
}

TEST(SampleMaskSet, NeverSelectsBosOrSpecials) {
  auto s = make_seq({{TokenKind::kEntity, 0}, {TokenKind::kRelation, {}}, {TokenKind::kEntity, 1},
                     {TokenKind::kSpecial, {}}, {TokenKind::kText, {}}, {TokenKind::kSpecial, {}}});
  auto imp = flat_importance(2, 1.0);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10000; ++k) {
    auto m = sample_mask_set(s, 0.5, imp, rng);
    ASSERT_TRUE(std::is_sorted(m.begin(), m.end()));
    ASSERT_EQ(std::adjacent_find(m.begin(), m.end()), m.end());
    for (auto i : m) {
      ASSERT_GT(i, 0u);
      ASSERT_NE(s.kinds[i], TokenKind::kSpecial);
    }
  }
}

TEST(SampleMaskSet, UniformOverTextChiSquare) {
  auto s = make_seq({{TokenKind::kText, {}}, {TokenKind::kText, {}}, {TokenKind::kText, {}}, {TokenKind::kText, {}}});
  auto imp = flat_importance(1, 0.0);
  std::mt19937_64 rng(3);
  std::map<std::size_t, int> counts;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    auto m = sample_mask_set(s, 0.15, imp, rng);
    ASSERT_EQ(m.size(), 1u);
    ++counts[m[0]];
  }
  ASSERT_EQ(counts.size(), 4u);
  double chi2 = 0;
  for (auto [pos, c] : counts) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  EXPECT_LT(chi2, 11.345);  // chi-square, 3 dof, p = 0.01
}

TEST(SampleMaskSet, ImportanceWeightsFavourEntities) {
  // Entity weight 1 + 1.0 = 2 against a text weight of 1.
  auto s = make_seq({{TokenKind::kEntity, 0}, {TokenKind::kText, {}}});
  auto imp = flat_importance(1, 1.0);
  std::mt19937_64 rng(4);
  int entity = 0, text = 0;
  for (int k = 0; k < 100000; ++k) {
    auto m = sample_mask_set(s, 0.15, imp, rng);
    (m[0] == 1 ? entity : text)++;
  }
  EXPECT_NEAR(static_cast<double>(entity) / text, 2.0, 0.1);
}

TEST(MaskTokens, EmptySetIsIdentity) {
  auto s = make_seq({{TokenKind::kText, {}}, {TokenKind::kEntity, 0}});
  auto b = mask_tokens(s, {});
  EXPECT_EQ(b.masked_seq.ids, s.ids);
  EXPECT_EQ(b.gamma, 0.0);
}

TEST(MaskTokens, AllMaskablePositions) {
  TokenSequence s;
  s.push(Vocab::kBos, TokenKind::kSpecial);
  for (int i = 0; i < 5; ++i) s.push(static_cast<TokenId>(10 + i), TokenKind::kText);
  auto b = mask_tokens(s, {1, 2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(b.gamma, 5.0 / 6.0);
}

TEST(MaskTokens, PositionalDiff) {
  auto s = make_seq({{TokenKind::kText, {}}, {TokenKind::kEntity, 0}, {TokenKind::kRelation, {}},
                     {TokenKind::kEntity, 1}, {TokenKind::kSpecial, {}}, {TokenKind::kText, {}}});
  ASSERT_EQ(s.size(), 8u);
  auto b = mask_tokens(s, {5, 2});
  std::vector<std::size_t> diff;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (b.masked_seq.ids[i] != s.ids[i]) diff.push_back(i);
  EXPECT_EQ(diff, (std::vector<std::size_t>{2, 5}));
  EXPECT_EQ(b.mask_set, diff);
  EXPECT_EQ(b.targets, (std::vector<TokenId>{s.ids[2], s.ids[5]}));
  for (auto i : diff) EXPECT_EQ(b.masked_seq.ids[i], Vocab::kMask);
  EXPECT_EQ(b.masked_seq.kinds, s.kinds);
  EXPECT_EQ(b.masked_seq.entity_of, s.entity_of);
  EXPECT_THROW(mask_tokens(s, {0}), DataError);
  EXPECT_THROW(mask_tokens(s, {8}), DataError);
  EXPECT_THROW(mask_tokens(s, {3, 3}), DataError);
}

TEST(ProjectLogits, ZeroWeightsGiveUniformDistribution) {
  Tape<double> t;
  std::mt19937_64 rng(5);
  auto logits = project_logits(t.leaf(random_matrix(1, 4, rng)), t.leaf(BasicTensor<double>::matrix(6, 4)),
                               t.leaf(BasicTensor<double>::matrix(1, 6)));
  auto p = softmax_rows(logits).value();
  for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(p[j], 1.0 / 6.0);
}

TEST(ProjectLogits, DominatingBiasWins) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<double> t;
    auto bias = BasicTensor<double>::matrix(1, 6);
    bias[3] = 1000;
    auto logits = project_logits(t.leaf(random_matrix(1, 4, rng)), t.leaf(random_matrix(6, 4, rng)), t.leaf(bias)).value();
    EXPECT_EQ(std::max_element(logits.storage().begin(), logits.storage().end()) - logits.storage().begin(), 3);
  }
}

TEST(ProjectLogits, MatchesMatrixVectorProduct) {
  std::mt19937_64 rng(7);
  auto h = random_matrix(1, 4, rng), w = random_matrix(6, 4, rng), b = random_matrix(1, 6, rng);
  Tape<double> t;
  auto logits = project_logits(t.leaf(h), t.leaf(w), t.leaf(b)).value();
  for (std::size_t v = 0; v < 6; ++v) {
    double expect = b[v];
    for (std::size_t c = 0; c < 4; ++c) expect += w(v, c) * h[c];
    EXPECT_NEAR(logits[v], expect, 1e-6);
  }
}

MaskedBatch batch_for(std::size_t n, std::vector<std::size_t> positions, std::vector<TokenId> targets) {
  MaskedBatch b;
  for (std::size_t i = 0; i < n; ++i) b.masked_seq.push(static_cast<TokenId>(i), TokenKind::kText);
  b.mask_set = std::move(positions);
  b.targets = std::move(targets);
  return b;
}

TEST(KmpLoss, PerfectPredictionIsZero) {
  Tape<double> t;
  auto bias = BasicTensor<double>::matrix(1, 6);
  bias[4] = 1000;
  std::mt19937_64 rng(8);
  auto loss = kmp_loss(t.leaf(random_matrix(5, 4, rng, 0.1)), batch_for(5, {1, 3}, {4, 4}),
                       t.leaf(random_matrix(6, 4, rng, 0.1)), t.leaf(bias));
  EXPECT_EQ(loss.value().item(), 0.0);
}

TEST(KmpLoss, UniformLogitsGiveLogVocab) {
  Tape<double> t;
  std::mt19937_64 rng(9);
  auto loss = kmp_loss(t.leaf(random_matrix(5, 4, rng)), batch_for(5, {2, 3, 4}, {0, 1, 5}),
                       t.leaf(BasicTensor<double>::matrix(6, 4)), t.leaf(BasicTensor<double>::matrix(1, 6)));
  EXPECT_DOUBLE_EQ(loss.value().item(), std::log(6.0));
}

TEST(KmpLoss, TwoTermOracle) {
  std::mt19937_64 rng(10);
  auto h = random_matrix(6, 4, rng), w = random_matrix(7, 4, rng), b = random_matrix(1, 7, rng);
  auto row_logits = [&](std::size_t r) {
    std::vector<double> out(7);
    for (std::size_t v = 0; v < 7; ++v) {
      out[v] = b[v];
      for (std::size_t c = 0; c < 4; ++c) out[v] += w(v, c) * h(r, c);
    }
    return out;
  };
  const double expect = 0.5 * (nll(row_logits(1), 3) + nll(row_logits(3), 6));
  Tape<double> t;
  auto loss = kmp_loss(t.leaf(h), batch_for(6, {2, 4}, {3, 6}), t.leaf(w), t.leaf(b));
  EXPECT_NEAR(loss.value().item(), expect, 1e-6);
  EXPECT_THROW(kmp_loss(t.leaf(h), batch_for(6, {}, {}), t.leaf(w), t.leaf(b)), DataError);
}

TEST(KmpLoss, PositionShiftIsObservable) {
  std::mt19937_64 rng(11);
  auto h = random_matrix(8, 4, rng), w = random_matrix(9, 4, rng), b = random_matrix(1, 9, rng);
  auto batch = batch_for(8, {2, 5}, {1, 7});
  auto loss_with = [&](const BasicTensor<double>& hh) {
    Tape<double> t;
    return kmp_loss(t.leaf(hh), batch, t.leaf(w), t.leaf(b)).value().item();
  };
  const double base = loss_with(h);
  EXPECT_GE(base, 0.0);
  for (std::size_t i : batch.mask_set) {
    auto shifted = h;
    shifted(i - 1, 0) += 0.5;
    EXPECT_NE(loss_with(shifted), base) << i;
    if (std::find(batch.mask_set.begin(), batch.mask_set.end(), i + 1) == batch.mask_set.end()) {
      auto same = h;
      same(i, 0) += 0.5;
      EXPECT_EQ(loss_with(same), base) << i;
    }
  }
}

TEST(KmpLoss, GradCheckThroughEncoder) {
  BkaConfig cfg;
  cfg.layers = 1;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.ffn_dim = 16;
  cfg.max_len = 8;
  std::mt19937_64 rng(12);
  auto p = init_params<double>(cfg, 12, rng);
  for (auto* t : {&p.token_embedding, &p.output_weight}) {
    for (auto& v : t->storage()) v *= 25;
  }
  for (auto& v : p.output_bias.storage()) v = std::normal_distribution<double>(0, 0.3)(rng);
  TokenSequence s;
  s.push(Vocab::kBos, TokenKind::kSpecial);
  s.push(7, TokenKind::kEntity, 0);
  s.push(10, TokenKind::kRelation);
  s.push(8, TokenKind::kEntity, 1);
  s.push(Vocab::kSep, TokenKind::kSpecial);
  s.push(6, TokenKind::kText);
  s.push(Vocab::kEos, TokenKind::kSpecial);
  auto batch = mask_tokens(s, {1, 3, 5});
  auto mask = AttentionMask(s.size(), true).additive<double>();

  std::vector<NamedParam<double>> params{{"token_embedding", &p.token_embedding},
                                         {"output_weight", &p.output_weight},
                                         {"output_bias", &p.output_bias}};
  LossBuilder<double> f = [&](Tape<double>& t, const std::vector<Var<double>>& leaves) {
    auto v = bind_params(t, p, false);
    v.token_embedding = leaves[0];
    v.output_weight = leaves[1];
    v.output_bias = leaves[2];
    std::mt19937_64 r(0);
    auto h = encode(batch.masked_seq, mask, v, cfg, false, r);
    return kmp_loss(h, batch, v.output_weight, v.output_bias);
  };
  auto report = grad_check(f, params, 1e-5);
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst_param << "[" << report.worst_index << "]";
}

}  // namespace
}  // namespace kgbilm
