#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "kgbilm/bka/encoder.hpp"
#include "kgbilm/cgsa/cgsa.hpp"
#include "kgbilm/numcore/grad_check.hpp"

namespace kgbilm {
namespace {

BasicTensor<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  auto m = BasicTensor<double>::matrix(r, c);
  for (auto& v : m.storage()) v = dist(rng);
  return m;
}

double loss_of(const BasicTensor<double>& z1, const BasicTensor<double>& z2, double tau, bool symmetric = false) {
  Tape<double> t;
  return cgsa_loss(t.leaf(z1), t.leaf(z2), tau, symmetric).value().item();
}

// Hub graph: centre c linked to a..e; a-b also linked; x-y far away.
KnowledgeGraph hub_graph() {
  KnowledgeGraph kg;
  for (const char* leaf : {"a", "b", "d", "e"}) kg.add_triple("c", "r", leaf);
  kg.add_triple("a", "s", "b");
  kg.add_triple("x", "r", "y");
  kg.set_description(*kg.find_entity("c"), "central node of the hub graph");
  kg.set_description(*kg.find_entity("a"), "first leaf of the hub");
  kg.set_description(*kg.find_entity("d"), "another leaf node");
  return kg;
}

// Undirected hop distance by relaxation to a fixed point.
std::size_t hops(const KnowledgeGraph& kg, EntityId a, EntityId b) {
  std::vector<std::size_t> d(kg.num_entities(), kUnboundedHops);
  d[a] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& t : kg.triples()) {
      for (auto [u, v] : {std::pair{t.head, t.tail}, std::pair{t.tail, t.head}}) {
        if (d[u] != kUnboundedHops && d[u] + 1 < d[v]) {
          d[v] = d[u] + 1;
          changed = true;
        }
      }
    }
  }
  return d[b];
}

bool connected_oracle(const std::vector<Triple>& ts) {
  std::set<EntityId> reached{ts[0].head};
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& t : ts) {
      if (reached.contains(t.head) != reached.contains(t.tail)) {
        reached.insert(t.head);
        reached.insert(t.tail);
        changed = true;
      }
    }
  }
  for (const auto& t : ts)
    if (!reached.contains(t.head)) return false;
  return true;
}

TEST(Augment, ZeroProbabilityIsPlainSerialization) {
  auto kg = hub_graph();
  auto v = build_vocab(kg, 1);
  CgsaConfig cfg;
  cfg.p_aug = 0.0;
  std::mt19937_64 rng(1);
  std::vector<Triple> origin(kg.triples().begin(), kg.triples().begin() + 4);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(augment(origin, kg, v, cfg, 64, rng).ids, serialize(origin, kg, v, 64).ids);
}

TEST(Augment, SingleTripleAlwaysSurvives) {
  auto kg = hub_graph();
  auto v = build_vocab(kg, 1);
  CgsaConfig cfg;
  cfg.p_aug = 1.0;
  std::mt19937_64 rng(2);
  const std::vector<Triple> origin{kg.triples()[0]};
  for (int k = 0; k < 200; ++k) EXPECT_EQ(recover_triples(augment(origin, kg, v, cfg, 64, rng), v), origin);
}

TEST(Augment, DropRules) {
  auto kg = hub_graph();
  const auto& ts = kg.triples();
  const std::vector<Triple> star(ts.begin(), ts.begin() + 4);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(can_drop_triple(star, k, kg, 2));
  // Dropping the middle triple of a-c-b... path c-a, a-b, c-d: removing c-a
  // leaves {a-b, c-d} disconnected.
  const std::vector<Triple> path{ts[0], ts[4], ts[2]};
  EXPECT_FALSE(can_drop_triple(path, 0, kg, 2));
  EXPECT_TRUE(can_drop_triple(path, 1, kg, 2));
  // x-y is farther than any radius from the rest.
  const std::vector<Triple> far{ts[0], ts[1], ts[5]};
  EXPECT_FALSE(can_drop_triple(far, 2, kg, 10));
  EXPECT_FALSE(can_drop_triple(std::vector<Triple>{ts[0]}, 0, kg, 2));
}

// Replays the three seeded decisions with independent helpers and compares
// the resulting sequence.
TEST(Augment, SeededReplayOracle) {
  auto kg = hub_graph();
  auto v = build_vocab(kg, 1);
  const auto& ts = kg.triples();
  const std::vector<Triple> origin{ts[0], ts[4], ts[1], ts[2]};
  CgsaConfig cfg;
  cfg.p_aug = 0.5;
  int dropped = 0, deleted = 0, shuffled = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    std::mt19937_64 rng(seed), replay(seed);
    auto got = augment(origin, kg, v, cfg, 64, rng);

    auto triples = origin;
    std::vector<std::pair<EntityId, std::vector<TokenId>>> descs;
    for (EntityId e : entities_in_order(triples)) {
      auto w = description_tokens(kg, v, e);
      if (!w.empty()) descs.emplace_back(e, w);
    }
    std::bernoulli_distribution apply(0.5);
    if (apply(replay)) {
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, triples.size() - 1)(replay);
      auto rest = triples;
      rest.erase(rest.begin() + static_cast<long>(k));
      std::set<EntityId> rest_ents;
      for (const auto& t : rest) rest_ents.insert({t.head, t.tail});
      bool ok = connected_oracle(rest);
      for (EntityId e : {triples[k].head, triples[k].tail}) {
        bool near = false;
        for (EntityId o : rest_ents) near = near || hops(kg, e, o) <= cfg.drop_radius;
        ok = ok && near;
      }
      if (ok) {
        triples = rest;
        ++dropped;
        std::erase_if(descs, [&](const auto& d) { return !rest_ents.contains(d.first); });
      }
    }
    if (apply(replay)) {
      auto& words = descs[std::uniform_int_distribution<std::size_t>(0, descs.size() - 1)(replay)].second;
      const std::size_t len = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(3, words.size()))(replay);
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, words.size() - len)(replay);
      words.erase(words.begin() + static_cast<long>(start), words.begin() + static_cast<long>(start + len));
      ++deleted;
    }
    if (apply(replay)) {
      std::shuffle(triples.begin(), triples.end(), replay);
      ++shuffled;
    }
    // Layout written out by hand.
    std::vector<TokenId> expect{Vocab::kBos};
    for (const auto& t : triples) expect.insert(expect.end(), {v.entity_token(t.head), v.relation_token(t.relation), v.entity_token(t.tail), Vocab::kSep});
    for (const auto& [e, words] : descs) {
      if (words.empty()) continue;
      expect.push_back(v.entity_token(e));
      expect.insert(expect.end(), words.begin(), words.end());
      expect.push_back(Vocab::kSep);
    }
    expect.push_back(Vocab::kEos);
    ASSERT_EQ(got.ids, expect) << "seed " << seed;
    EXPECT_FALSE(recover_triples(got, v).empty());
  }
  EXPECT_GT(dropped, 0);
  EXPECT_GT(deleted, 0);
  EXPECT_GT(shuffled, 0);
}

TEST(Pool, SingleRowAndIdenticalRows) {
  Tape<double> t;
  TokenSequence one;
  one.push(Vocab::kBos, TokenKind::kSpecial);
  auto row = BasicTensor<double>({1, 2}, {3.0, 4.0});
  for (auto m : {PoolMethod::kMean, PoolMethod::kBos}) {
    auto z = pool(t.leaf(row), one, m).value();
    EXPECT_NEAR(z[0], 0.6, 1e-15);
    EXPECT_NEAR(z[1], 0.8, 1e-15);
  }
  TokenSequence two = one;
  two.push(9, TokenKind::kText);
  auto z = pool(t.leaf(BasicTensor<double>({2, 2}, {3.0, 4.0, 3.0, 4.0})), two, PoolMethod::kMean).value();
  EXPECT_NEAR(z[0], 0.6, 1e-15);
  EXPECT_NEAR(z[1], 0.8, 1e-15);
}

TEST(Pool, MeanThenNormalizeOracle) {
  std::mt19937_64 rng(3);
  auto h = random_matrix(4, 8, rng);
  TokenSequence s;
  s.push(Vocab::kBos, TokenKind::kSpecial);
  s.push(7, TokenKind::kText);
  s.push(Vocab::kPad, TokenKind::kSpecial);
  s.push(Vocab::kEos, TokenKind::kSpecial);
  Tape<double> t;
  auto z = pool(t.leaf(h), s, PoolMethod::kMean).value();
  std::vector<double> mean(8, 0.0);
  for (std::size_t r : {0, 1, 3})
    for (std::size_t c = 0; c < 8; ++c) mean[c] += h(r, c) / 3.0;
  double norm = 0;
  for (double m : mean) norm += m * m;
  norm = std::sqrt(norm);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(z[c], mean[c] / norm, 1e-6);
  double unit = 0;
  for (double x : z.storage()) unit += x * x;
  EXPECT_NEAR(std::sqrt(unit), 1.0, 1e-6);
  TokenSequence pads;
  pads.push(Vocab::kPad, TokenKind::kSpecial);
  EXPECT_THROW(pool(t.leaf(BasicTensor<double>({1, 2}, {1.0, 1.0})), pads, PoolMethod::kMean), DataError);
}

TEST(CosineSim, Examples) {
  const std::vector<double> u{1, 2}, v{2, 1}, x{1, 0}, y{0, 3}, zero{0, 0};
  EXPECT_NEAR(cosine_sim(u, u), 1.0, 1e-15);
  EXPECT_EQ(cosine_sim(x, y), 0.0);
  EXPECT_NEAR(cosine_sim(u, v), 0.8, 1e-15);
  EXPECT_THROW(cosine_sim(u, zero), NumericalError);
}

TEST(CgsaLoss, SinglePairIsZero) {
  std::mt19937_64 rng(4);
  EXPECT_EQ(loss_of(random_matrix(1, 5, rng), random_matrix(1, 5, rng), 0.07), 0.0);
}

TEST(CgsaLoss, AlignedOrthogonalPairs) {
  auto z = BasicTensor<double>({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const double expect = std::log1p(std::exp(-1.0 / 0.07));
  EXPECT_NEAR(loss_of(z, z, 0.07), expect, 1e-6 * expect);
  EXPECT_NEAR(expect, 6.249e-7, 0.001e-7);
}

TEST(CgsaLoss, RejectsBadInputs) {
  std::mt19937_64 rng(5);
  auto a = random_matrix(2, 3, rng);
  EXPECT_THROW(loss_of(a, a, 0.0), ConfigError);
  EXPECT_THROW(loss_of(a, random_matrix(3, 3, rng), 0.07), ShapeError);
}

TEST(CgsaLoss, PropertiesOnRandomBatches) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng() % 6, d = 2 + rng() % 5;
    auto z1 = random_matrix(b, d, rng), z2 = random_matrix(b, d, rng);
    const double tau = 0.05 + 0.5 * std::uniform_real_distribution<double>()(rng);
    const double base = loss_of(z1, z2, tau);
    EXPECT_GE(base, 0.0);
    EXPECT_GE(loss_of(z1, z2, tau, true), 0.0);

    // Common rotation in the (0, 1) plane.
    const double th = std::uniform_real_distribution<double>(0, 6.28)(rng);
    auto rot = [&](BasicTensor<double> z) {
      for (std::size_t r = 0; r < b; ++r) {
        const double x = z(r, 0), y = z(r, 1);
        z(r, 0) = std::cos(th) * x - std::sin(th) * y;
        z(r, 1) = std::sin(th) * x + std::cos(th) * y;
      }
      return z;
    };
    EXPECT_NEAR(loss_of(rot(z1), rot(z2), tau), base, 1e-9 * std::max(1.0, base));
  }
}

// Moving a negative candidate onto the anchor's direction raises its
// similarity and must not lower the anchor's loss.
TEST(CgsaLoss, MonotoneInNegativeSimilarity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto z1 = random_matrix(1, 4, rng);
    auto z2 = random_matrix(3, 4, rng);
    auto logits_loss = [&](const BasicTensor<double>& cand) {
      double sims[3], mx = -1e9, z = 0;
      for (std::size_t l = 0; l < 3; ++l) {
        std::vector<double> a(z1.storage()), c(cand.row(l).begin(), cand.row(l).end());
        sims[l] = cosine_sim(a, c) / 0.1;
        mx = std::max(mx, sims[l]);
      }
      for (double s : sims) z += std::exp(s - mx);
      return -(sims[0] - mx - std::log(z));
    };
    auto moved = z2;
    for (std::size_t c = 0; c < 4; ++c) moved(1, c) = 0.5 * z2(1, c) + 2.0 * z1[c];
    std::vector<double> a(z1.storage()), before(z2.row(1).begin(), z2.row(1).end()),
        after(moved.row(1).begin(), moved.row(1).end());
    if (cosine_sim(a, after) <= cosine_sim(a, before)) continue;
    EXPECT_GE(logits_loss(moved), logits_loss(z2));
  }
}

TEST(CgsaLoss, GradCheck) {
  std::mt19937_64 rng(8);
  auto z1 = random_matrix(4, 6, rng), z2 = random_matrix(4, 6, rng);
  for (bool symmetric : {false, true}) {
    LossBuilder<double> f = [&](Tape<double>&, const std::vector<Var<double>>& p) {
      return cgsa_loss(p[0], p[1], 0.5, symmetric);
    };
    auto report = grad_check(f, {{"z1", &z1}, {"z2", &z2}}, 1e-6);
    EXPECT_LT(report.max_relative_error, 1e-3) << symmetric;
  }
}

TEST(Views, IndependentDropoutStreamsDiffer) {
  BkaConfig cfg;
  cfg.layers = 1;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.ffn_dim = 16;
  cfg.max_len = 8;
  cfg.dropout_p = 0.1;
  std::mt19937_64 init(9);
  auto p = init_params<double>(cfg, 12, init);
  TokenSequence s;
  s.push(Vocab::kBos, TokenKind::kSpecial);
  s.push(7, TokenKind::kEntity, 0);
  s.push(10, TokenKind::kRelation);
  s.push(Vocab::kEos, TokenKind::kSpecial);
  auto mask = AttentionMask(4, true).additive<double>();
  auto view = [&](std::uint64_t seed) {
    Tape<double> t;
    auto v = bind_params(t, p, false);
    std::mt19937_64 r(seed);
    return pool(encode(s, mask, v, cfg, true, r), s, PoolMethod::kMean).value();
  };
  EXPECT_FALSE(view(1) == view(2));
  EXPECT_EQ(view(1), view(1));
}

}  // namespace
}  // namespace kgbilm
