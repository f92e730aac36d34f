#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgbilm/kgstore/graph.hpp"
#include "kgbilm/util/errors.hpp"

namespace kgbilm {

enum class Protocol { kFiltered, kRaw };

inline std::string_view to_string(Protocol p) { return p == Protocol::kFiltered ? "filtered" : "raw"; }

inline constexpr std::size_t kHitsAt[] = {1, 3, 10};

struct Metrics {
  double mr = 0, mrr = 0;
  std::map<std::size_t, double> hits;  // k -> fraction with rank <= k
  std::size_t n = 0;
};

/// Mid-tie rank of `answer` among the candidates `scores` indexes. Under
/// the filtered protocol, candidates in `known_true` other than the answer
/// are skipped; the answer itself must be one of the known-true entities.
inline double rank_of(std::span<const double> scores, EntityId answer, std::span<const EntityId> known_true,
                      Protocol protocol) {
  if (answer >= scores.size()) throw DataError("rank_of: answer has no score");
  std::vector<bool> skip(scores.size(), false);
  if (protocol == Protocol::kFiltered) {
    bool answer_known = false;
    for (EntityId e : known_true) {
      if (e == answer) {
        answer_known = true;
      } else if (e < scores.size()) {
        skip[e] = true;
      }
    }
    if (!answer_known) throw DataError("rank_of: answer missing from the known-true set");
  }
  const double s = scores[answer];
  if (std::isnan(s)) throw NumericalError("rank_of: answer score is NaN");
  std::size_t greater = 0, ties = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == answer || skip[c]) continue;
    if (std::isnan(scores[c])) throw NumericalError("rank_of: candidate score is NaN");
    if (scores[c] > s) {
      ++greater;
    } else if (scores[c] == s) {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(greater) + 0.5 * static_cast<double>(ties);
}

inline Metrics rank_metrics(std::span<const double> ranks) {
  if (ranks.empty()) throw DataError("rank_metrics: no ranks");
  Metrics m;
  m.n = ranks.size();
  for (std::size_t k : kHitsAt) m.hits[k] = 0;
  for (double r : ranks) {
    if (!(r >= 1.0)) throw DataError("rank_metrics: rank below 1");
    m.mr += r;
    m.mrr += 1.0 / r;
    for (std::size_t k : kHitsAt)
      if (r <= static_cast<double>(k)) m.hits[k] += 1;
  }
  const double n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  for (auto& [k, v] : m.hits) v /= n;
  return m;
}

struct EvalReport {
  Protocol protocol = Protocol::kFiltered;
  Metrics all, tail, head;  // tail/head: per prediction direction
  std::size_t n_queries = 0;
  std::size_t n_candidates = 0;
  std::size_t unseen_queries = 0;  // queries whose triple has an unseen entity
  std::vector<double> tail_ranks, head_ranks;
  std::vector<std::size_t> tail_candidates, head_candidates;  // after filtering
};

namespace detail {

inline std::string metrics_fields(const std::string& prefix, const Metrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%smr=%.9g\n%smrr=%.9g\n%shits@1=%.9g\n%shits@3=%.9g\n%shits@10=%.9g\n%sn=%zu\n",
                prefix.c_str(), m.mr, prefix.c_str(), m.mrr, prefix.c_str(), m.hits.at(1), prefix.c_str(),
                m.hits.at(3), prefix.c_str(), m.hits.at(10), prefix.c_str(), m.n);
  return buf;
}

}  // namespace detail

/// key=value lines.
inline std::string report_to_text(const EvalReport& r) {
  std::string out = "protocol=" + std::string(to_string(r.protocol)) + "\n";
  out += "n_queries=" + std::to_string(r.n_queries) + "\n";
  out += "n_candidates=" + std::to_string(r.n_candidates) + "\n";
  out += "unseen_queries=" + std::to_string(r.unseen_queries) + "\n";
  out += detail::metrics_fields("", r.all);
  if (r.tail.n) out += detail::metrics_fields("tail.", r.tail);
  if (r.head.n) out += detail::metrics_fields("head.", r.head);
  return out;
}

/// Header line plus one tab-separated row.
inline std::string report_to_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "protocol\tn_queries\tmr\tmrr\thits@1\thits@3\thits@10\n%s\t%zu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
                std::string(to_string(r.protocol)).c_str(), r.n_queries, r.all.mr, r.all.mrr, r.all.hits.at(1),
                r.all.hits.at(3), r.all.hits.at(10));
  return buf;
}

/// Ranks of an answer among `n_candidates` uniformly random scores.
template <class Rng>
EvalReport random_baseline(std::size_t n_candidates, std::size_t n_queries, Rng& rng) {
  if (n_candidates == 0 || n_queries == 0) throw ConfigError("random_baseline: need candidates and queries");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(n_candidates);
  EvalReport r;
  r.protocol = Protocol::kRaw;
  r.n_candidates = n_candidates;
  r.n_queries = n_queries;
  for (std::size_t q = 0; q < n_queries; ++q) {
    for (auto& s : scores) s = u(rng);
    r.tail_ranks.push_back(rank_of(scores, 0, {}, Protocol::kRaw));
    r.tail_candidates.push_back(n_candidates);
  }
  r.all = r.tail = rank_metrics(r.tail_ranks);
  return r;
}

/// H_C / C: expected reciprocal rank of a uniformly random ranking.
inline double random_mrr(std::size_t n_candidates) {
  double h = 0;
  for (std::size_t k = 1; k <= n_candidates; ++k) h += 1.0 / static_cast<double>(k);
  return h / static_cast<double>(n_candidates);
}

/// P(X >= k) for X a sum of independent Bernoulli(p_i).
inline double poisson_binomial_upper_tail(std::span<const double> p, std::size_t k) {
  std::vector<double> dist{1.0};
  for (double pi : p) {
    std::vector<double> next(dist.size() + 1, 0.0);
    for (std::size_t j = 0; j < dist.size(); ++j) {
      next[j] += dist[j] * (1.0 - pi);
      next[j + 1] += dist[j] * pi;
    }
    dist = std::move(next);
  }
  double tail = 0;
  for (std::size_t j = k; j < dist.size(); ++j) tail += dist[j];
  return std::min(1.0, tail);
}

/// P(X >= k) for X ~ Binomial(n, p).
inline double binomial_upper_tail(std::size_t n, double p, std::size_t k) {
  return poisson_binomial_upper_tail(std::vector<double>(n, p), k);
}

}  // namespace kgbilm
