#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "kgbilm/bka/encoder.hpp"
#include "kgbilm/cgsa/cgsa.hpp"
#include "kgbilm/evalsuite/metrics.hpp"
#include "kgbilm/kgstore/sampling.hpp"
#include "kgbilm/kmp/kmp.hpp"
#include "kgbilm/util/parallel.hpp"
#include "kgbilm/util/random.hpp"

namespace kgbilm {

enum class Predict { kTail, kHead };

struct Query {
  EntityId known = 0;
  RelationId relation = 0;
  Predict direction = Predict::kTail;
  EntityId answer = 0;
};

inline Query tail_query(const Triple& t) { return {t.head, t.relation, Predict::kTail, t.tail}; }
inline Query head_query(const Triple& t) { return {t.tail, t.relation, Predict::kHead, t.head}; }

enum class ScorerKind { kMaskLogit, kEmbedCosine };

/// Scores of every entity as the missing slot of a query.
using Scorer = std::function<std::vector<double>(const Query&)>;

/// Eval-mode scoring with trained parameters.
///
/// The query sequence is the triple with the missing entity replaced by
/// MASK, followed by the known entity's description. The MASK slot is linked
/// to the known entity so the attention mask does not depend on the answer.
template <class T>
class ModelScorer {
 public:
  ModelScorer(const ModelParams<T>& params, const BkaConfig& cfg, PoolMethod pooling, const KnowledgeGraph& kg,
              const Vocab& vocab)
      : params_(&params), cfg_(cfg), pooling_(pooling), kg_(&kg), vocab_(&vocab) {
    check_param_shapes(params, cfg, vocab.size());
    if (vocab.num_entities() != kg.num_entities()) throw DataError("scorer: vocabulary and graph entity counts differ");
  }

  static std::size_t mask_position(const Query& q) { return q.direction == Predict::kTail ? 3 : 1; }

  TokenSequence query_sequence(const Query& q) const {
    const Triple t{q.known, q.relation, q.known};
    const EntityId describe[] = {q.known};
    auto seq = serialize_source(make_source({t}, *kg_, *vocab_, std::span<const EntityId>(describe)), *vocab_,
                                cfg_.max_len);
    const std::size_t slot = mask_position(q);
    seq.ids[slot] = Vocab::kMask;
    seq.entity_of[slot] = q.known;
    seq.source_triples.clear();
    return seq;
  }

  /// Description of `e` with its entity symbol masked; nullopt without a description.
  std::optional<TokenSequence> candidate_sequence(EntityId e) const {
    if (description_tokens(*kg_, *vocab_, e).empty()) return std::nullopt;
    auto seq = serialize_description(e, *kg_, *vocab_, cfg_.max_len);
    seq.ids[1] = Vocab::kMask;
    return seq;
  }

  /// Final hidden states, no dropout.
  BasicTensor<T> hidden(const TokenSequence& seq) const {
    Tape<T> tape;
    const auto vars = bind_params(tape, *params_, false);
    Rng unused(0);
    return encode(seq, build_bka_mask(seq, *kg_, cfg_).template additive<T>(), vars, cfg_, false, unused).value();
  }

  /// Unit-length pooled embedding.
  std::vector<double> embedding(const TokenSequence& seq) const {
    Tape<T> tape;
    const auto vars = bind_params(tape, *params_, false);
    Rng unused(0);
    auto h = encode(seq, build_bka_mask(seq, *kg_, cfg_).template additive<T>(), vars, cfg_, false, unused);
    const auto& z = pool(h, seq, pooling_).value().storage();
    return {z.begin(), z.end()};
  }

  /// Entity-symbol logits read one position before the MASK.
  std::vector<double> mask_logit_scores(const Query& q) const {
    const auto seq = query_sequence(q);
    const auto h = hidden(seq);
    const std::size_t row = mask_position(q) - 1;
    const auto& w = params_->output_weight;
    const std::size_t d = cfg_.model_dim;
    std::vector<double> out(kg_->num_entities());
    for (EntityId e = 0; e < out.size(); ++e) {
      const TokenId tok = vocab_->entity_token(e);
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += static_cast<double>(h(row, c)) * static_cast<double>(w(tok, c));
      out[e] = s + static_cast<double>(params_->output_bias[tok]);
    }
    return out;
  }

  /// Cosine between the pooled query and each pooled candidate description;
  /// -1 for candidates without one.
  std::vector<double> embed_cosine_scores(const Query& q, std::size_t threads = 1) const {
    return embed_cosine_scores(query_sequence(q), threads);
  }

  std::vector<double> embed_cosine_scores(const TokenSequence& query, std::size_t threads = 1) const {
    prepare_candidates(threads);
    const auto z = embedding(query);
    std::vector<double> out(kg_->num_entities(), -1.0);
    for (EntityId e = 0; e < out.size(); ++e)
      if (candidates_[e]) out[e] = cosine_sim(z, *candidates_[e]);
    return out;
  }

  /// Candidate embeddings are computed once, on first use.
  void prepare_candidates(std::size_t threads = 1) const {
    std::call_once(*candidates_once_, [&] {
      candidates_.assign(kg_->num_entities(), std::nullopt);
      parallel_for(kg_->num_entities(), threads, [&](std::size_t e) {
        if (auto seq = candidate_sequence(static_cast<EntityId>(e))) candidates_[e] = embedding(*seq);
      });
    });
  }

  Scorer scorer(ScorerKind kind) const {
    if (kind == ScorerKind::kMaskLogit) return [this](const Query& q) { return mask_logit_scores(q); };
    return [this](const Query& q) { return embed_cosine_scores(query_sequence(q)); };
  }

 private:
  const ModelParams<T>* params_;
  BkaConfig cfg_;
  PoolMethod pooling_;
  const KnowledgeGraph* kg_;
  const Vocab* vocab_;
  mutable std::unique_ptr<std::once_flag> candidates_once_ = std::make_unique<std::once_flag>();
  mutable std::vector<std::optional<std::vector<double>>> candidates_;
};

/// Entities completing (known, relation, ?) or (?, relation, known) among a
/// set of facts.
class KnownFacts {
 public:
  void add(const Triple& t) {
    tails_[{t.head, t.relation}].push_back(t.tail);
    heads_[{t.tail, t.relation}].push_back(t.head);
  }

  template <class Range>
  void add_all(const Range& triples) {
    for (const auto& t : triples) add(t);
  }

  std::span<const EntityId> answers(const Query& q) const {
    const auto& index = q.direction == Predict::kTail ? tails_ : heads_;
    auto it = index.find({q.known, q.relation});
    if (it == index.end()) return {};
    return it->second;
  }

 private:
  std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> tails_, heads_;
};

struct EvalOptions {
  Protocol protocol = Protocol::kFiltered;
  bool tails = true, heads = true;
  std::size_t threads = 1;
};

/// Ranks every test triple in the requested directions over all entities of
/// `split.train`. Filtering uses train, valid and test facts.
inline EvalReport evaluate(const Split& split, const Scorer& scorer, const EvalOptions& opt = {}) {
  if (split.test_triples.empty()) throw DataError("evaluate: empty test set");
  KnownFacts facts;
  facts.add_all(split.train.triples());
  facts.add_all(split.valid_triples);
  facts.add_all(split.test_triples);
  const std::size_t n_entities = split.train.num_entities();
  std::vector<bool> unseen(n_entities, false);
  for (EntityId e : split.unseen_entities) unseen[e] = true;

  std::vector<Query> queries;
  for (const auto& t : split.test_triples) {
    if (opt.tails) queries.push_back(tail_query(t));
    if (opt.heads) queries.push_back(head_query(t));
  }
  if (queries.empty()) throw ConfigError("evaluate: no prediction direction selected");
  std::vector<double> ranks(queries.size());
  parallel_for(queries.size(), opt.threads, [&](std::size_t i) {
    const auto& q = queries[i];
    const auto scores = scorer(q);
    if (scores.size() != n_entities) throw ShapeError("evaluate: scorer returned wrong candidate count");
    ranks[i] = rank_of(scores, q.answer, facts.answers(q), opt.protocol);
  });

  EvalReport r;
  r.protocol = opt.protocol;
  r.n_queries = queries.size();
  r.n_candidates = n_entities;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    (q.direction == Predict::kTail ? r.tail_ranks : r.head_ranks).push_back(ranks[i]);
    if (unseen[q.known] || unseen[q.answer]) ++r.unseen_queries;
    const std::size_t filtered = opt.protocol == Protocol::kFiltered ? facts.answers(q).size() - 1 : 0;
    (q.direction == Predict::kTail ? r.tail_candidates : r.head_candidates).push_back(n_entities - filtered);
  }
  r.all = rank_metrics(ranks);
  if (!r.tail_ranks.empty()) r.tail = rank_metrics(r.tail_ranks);
  if (!r.head_ranks.empty()) r.head = rank_metrics(r.head_ranks);
  return r;
}

/// Number of test triples without an unseen entity (0 for a valid zero-shot split).
inline std::size_t zero_shot_violations(const Split& split) {
  std::vector<bool> unseen(split.train.num_entities(), false);
  for (EntityId e : split.unseen_entities) unseen[e] = true;
  std::size_t bad = 0;
  for (const auto& t : split.test_triples)
    if (!unseen[t.head] && !unseen[t.tail]) ++bad;
  for (const auto& t : split.train.triples())
    if (unseen[t.head] || unseen[t.tail]) ++bad;
  return bad;
}

/// One-sided test of Hits@k against uniformly random ranking: each query
/// succeeds by chance with probability min(k, C_q) / C_q, C_q being its
/// candidate count after filtering. Returns P(at least the observed hits).
inline double hits_p_value(const EvalReport& r, std::size_t k) {
  std::vector<double> p;
  std::size_t hits = 0;
  for (const auto& [ranks, counts] : {std::pair{&r.tail_ranks, &r.tail_candidates}, std::pair{&r.head_ranks, &r.head_candidates}}) {
    if (ranks->size() != counts->size()) throw DataError("hits_p_value: report lacks candidate counts");
    for (std::size_t i = 0; i < ranks->size(); ++i) {
      const auto c = static_cast<double>((*counts)[i]);
      p.push_back(std::min(static_cast<double>(k), c) / c);
      if ((*ranks)[i] <= static_cast<double>(k)) ++hits;
    }
  }
  return poisson_binomial_upper_tail(p, hits);
}

}  // namespace kgbilm
