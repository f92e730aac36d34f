#pragma once

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "kgbilm/bka/encoder.hpp"
#include "kgbilm/cgsa/cgsa.hpp"
#include "kgbilm/kgstore/importance.hpp"
#include "kgbilm/kgstore/sampling.hpp"
#include "kgbilm/kmp/kmp.hpp"
#include "kgbilm/trainer/optim.hpp"
#include "kgbilm/util/parallel.hpp"
#include "kgbilm/util/random.hpp"

namespace kgbilm {

/// Read-only inputs shared by every training step.
struct TrainingData {
  const KnowledgeGraph* kg = nullptr;  // training graph; also drives the attention masks
  const Vocab* vocab = nullptr;
  ImportanceScores importance;
  std::vector<EntityId> seeds;  // entities with at least one incident triple

  TrainingData(const KnowledgeGraph& graph, const Vocab& v)
      : kg(&graph), vocab(&v), importance(importance_scores(graph)) {
    for (EntityId e = 0; e < graph.num_entities(); ++e)
      if (graph.degree(e) > 0) seeds.push_back(e);
    if (seeds.empty()) throw DataError("training data: graph has no triples");
  }
};

struct Origin {
  EntityId seed = 0;
  std::vector<Triple> triples;
};

/// One sub-graph per batch slot: a uniformly drawn seed entity and its
/// bounded neighbourhood.
inline std::vector<Origin> sample_origins(const TrainingData& data, const TrainConfig& cfg, std::size_t step) {
  Rng rng = derive_rng({cfg.seed, step, 0x0516u});
  std::uniform_int_distribution<std::size_t> pick(0, data.seeds.size() - 1);
  std::vector<Origin> out;
  out.reserve(cfg.batch_size);
  for (std::size_t k = 0; k < cfg.batch_size; ++k) {
    const EntityId seed = data.seeds[pick(rng)];
    out.push_back({seed, sample_subgraph(*data.kg, seed, cfg.subgraph_radius, cfg.subgraph_max_triples, rng)});
  }
  return out;
}

/// Everything random about one batch slot, fixed before any forward pass.
struct PreparedSample {
  TokenSequence view1, view2;
  AttentionMask mask1, mask2;
  MaskedBatch masked;  // view1 with MASK substitutions
  std::uint64_t dropout_seed1 = 0, dropout_seed2 = 0;
};

namespace detail {

template <class F>
auto with_sample_context(std::size_t k, F&& f) {
  const std::string where = "sample " + std::to_string(k) + ": ";
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  }
}

}  // namespace detail

inline PreparedSample prepare_sample(const Origin& origin, const TrainingData& data, const TrainConfig& cfg,
                                     std::size_t step, std::size_t index) {
  return detail::with_sample_context(index, [&] {
    PreparedSample s;
    Rng aug1 = derive_rng({cfg.seed, step, index, 1});
    Rng aug2 = derive_rng({cfg.seed, step, index, 2});
    Rng masking = derive_rng({cfg.seed, step, index, 3});
    const EntityId seed[] = {origin.seed};
    std::optional<std::span<const EntityId>> describe;
    if (cfg.describe_seed_only) describe = std::span<const EntityId>(seed);
    s.view1 = augment(origin.triples, *data.kg, *data.vocab, cfg.cgsa, cfg.bka.max_len, aug1, describe);
    s.view2 = augment(origin.triples, *data.kg, *data.vocab, cfg.cgsa, cfg.bka.max_len, aug2, describe);
    s.mask1 = build_bka_mask(s.view1, *data.kg, cfg.bka);
    s.mask2 = build_bka_mask(s.view2, *data.kg, cfg.bka);
    s.masked = mask_tokens(s.view1, sample_mask_set(s.view1, cfg.gamma, data.importance, masking));
    s.dropout_seed1 = derive_seed({cfg.seed, step, index, 4});
    s.dropout_seed2 = derive_seed({cfg.seed, step, index, 5});
    return s;
  });
}

template <class T>
struct SampleOutputs {
  Var<T> kmp;     // scalar
  Var<T> z1, z2;  // [1 x d] pooled views
};

/// Both views of one sample on `tape`: KMP on the masked first view, pooled
/// embeddings of both views.
template <class T>
SampleOutputs<T> forward_sample(const ModelVars<T>& vars, const PreparedSample& s, const TrainConfig& cfg,
                                bool train) {
  Rng r1(s.dropout_seed1), r2(s.dropout_seed2);
  auto h1 = encode(s.masked.masked_seq, s.mask1.additive<T>(), vars, cfg.bka, train, r1);
  auto h2 = encode(s.view2, s.mask2.additive<T>(), vars, cfg.bka, train, r2);
  return {kmp_loss(h1, s.masked, vars.output_weight, vars.output_bias), pool(h1, s.masked.masked_seq, cfg.cgsa.pooling),
          pool(h2, s.view2, cfg.cgsa.pooling)};
}

struct JointLosses {
  double kmp = 0, cgsa = 0, total = 0;
};

/// Whole-batch objective on a single tape:
///   mean_k KMP_k + lambda * InfoNCE(Z1, Z2).
template <class T>
Var<T> joint_loss(const ModelVars<T>& vars, const std::vector<PreparedSample>& samples,
                  const TrainConfig& cfg, bool train, JointLosses* parts = nullptr) {
  if (samples.empty()) throw DataError("joint_loss: empty batch");
  std::vector<Var<T>> z1s, z2s;
  Var<T> kmp_sum{};
  for (std::size_t k = 0; k < samples.size(); ++k) {
    auto out = detail::with_sample_context(k, [&] { return forward_sample(vars, samples[k], cfg, train); });
    kmp_sum = k == 0 ? out.kmp : add(kmp_sum, out.kmp);
    z1s.push_back(out.z1);
    z2s.push_back(out.z2);
  }
  auto kmp = scale(kmp_sum, static_cast<T>(1.0 / static_cast<double>(samples.size())));
  auto cgsa = cgsa_loss(concat_rows<T>(z1s), concat_rows<T>(z2s), cfg.cgsa.tau, cfg.cgsa.symmetric);
  auto total = add(kmp, scale(cgsa, static_cast<T>(cfg.lambda_cgsa)));
  if (parts) *parts = {kmp.value().item(), cgsa.value().item(), total.value().item()};
  return total;
}

/// Gradient of joint_loss computed sample by sample: each sample gets its
/// own tape (run on worker threads), a small tape computes the InfoNCE term
/// and its gradient with respect to the pooled vectors, which then seeds the
/// backward pass of every sample tape. Per-sample gradients are summed in
/// sample order, so the result does not depend on the thread count.
template <class T>
ModelParams<T> joint_gradients(const ModelParams<T>& params, const std::vector<PreparedSample>& samples,
                               const TrainConfig& cfg, bool train, JointLosses& losses) {
  const std::size_t b = samples.size();
  if (b == 0) throw DataError("joint_gradients: empty batch");
  struct Slot {
    std::unique_ptr<Tape<T>> tape;
    ModelVars<T> vars;
    SampleOutputs<T> out;
    ModelParams<T> grads;
  };
  std::vector<Slot> slots(b);
  parallel_for(b, cfg.threads, [&](std::size_t k) {
    auto& s = slots[k];
    s.tape = std::make_unique<Tape<T>>();
    s.vars = bind_params(*s.tape, params);
    s.out = detail::with_sample_context(k, [&] { return forward_sample(s.vars, samples[k], cfg, train); });
  });

  const std::size_t d = slots[0].out.z1.value().cols();
  auto z1 = BasicTensor<T>::matrix(b, d), z2 = BasicTensor<T>::matrix(b, d);
  double kmp = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    std::copy(slots[k].out.z1.value().storage().begin(), slots[k].out.z1.value().storage().end(), z1.row(k).begin());
    std::copy(slots[k].out.z2.value().storage().begin(), slots[k].out.z2.value().storage().end(), z2.row(k).begin());
    kmp += static_cast<double>(slots[k].out.kmp.value().item());
  }
  kmp /= static_cast<double>(b);

  Tape<T> head;
  auto z1v = head.leaf(z1), z2v = head.leaf(z2);
  auto cgsa = cgsa_loss(z1v, z2v, cfg.cgsa.tau, cfg.cgsa.symmetric);
  head.backward(cgsa);
  const auto g1 = head.grad(z1v), g2 = head.grad(z2v);
  losses.kmp = kmp;
  losses.cgsa = cgsa.value().item();
  losses.total = losses.kmp + cfg.lambda_cgsa * losses.cgsa;

  const T lambda = static_cast<T>(cfg.lambda_cgsa);
  const T inv_b = static_cast<T>(1.0 / static_cast<double>(b));
  parallel_for(b, cfg.threads, [&](std::size_t k) {
    auto& s = slots[k];
    auto row = [&](const BasicTensor<T>& g) {
      auto r = BasicTensor<T>::matrix(1, d);
      for (std::size_t c = 0; c < d; ++c) r[c] = lambda * g(k, c);
      return r;
    };
    std::vector<Seed<T>> seeds{{s.out.kmp, BasicTensor<T>::scalar(inv_b)}, {s.out.z1, row(g1)}, {s.out.z2, row(g2)}};
    s.tape->backward(std::span<const Seed<T>>(seeds));
    s.grads = collect_grads(*s.tape, s.vars, params);
    s.tape.reset();
  });

  ModelParams<T> total = std::move(slots[0].grads);
  auto acc = tensors_of(total);
  for (std::size_t k = 1; k < b; ++k) {
    auto part = tensors_of(slots[k].grads);
    for (std::size_t t = 0; t < acc.size(); ++t) {
      auto& dst = acc[t]->storage();
      const auto& src = part[t]->storage();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return total;
}

struct LossRecord {
  std::size_t step = 0;
  double lr = 0, kmp = 0, cgsa = 0, total = 0;
};

/// "step<TAB>lr<TAB>kmp<TAB>cgsa<TAB>total"
inline std::string format_loss_line(const LossRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%.9g", r.step, r.lr, r.kmp, r.cgsa, r.total);
  return buf;
}

struct TrainState {
  ModelParams<float> params;
  AdamState<float> adam;
  std::vector<LossRecord> history;

  std::size_t step() const noexcept { return adam.step; }
};

inline TrainState init_train_state(const TrainConfig& cfg, std::size_t vocab_size) {
  cfg.validate();
  Rng rng = derive_rng({cfg.seed, 0x1417u});
  TrainState s;
  s.params = init_params<float>(cfg.bka, vocab_size, rng);
  s.adam = AdamState<float>::zeros_like(s.params);
  return s;
}

/// One optimisation step on a freshly sampled batch: joint gradient, global
/// norm clipping, Adam update at the scheduled learning rate.
inline LossRecord train_step(TrainState& state, const TrainingData& data, const TrainConfig& cfg) {
  const std::size_t step = state.step() + 1;
  const double lr = lr_schedule(step, cfg);
  const auto origins = sample_origins(data, cfg, step);
  std::vector<PreparedSample> samples(origins.size());
  parallel_for(origins.size(), cfg.threads,
               [&](std::size_t k) { samples[k] = prepare_sample(origins[k], data, cfg, step, k); });
  JointLosses losses;
  auto grads = joint_gradients(state.params, samples, cfg, true, losses);
  if (!std::isfinite(losses.total)) {
    throw NumericalError("train_step " + std::to_string(step) + ": loss is not finite");
  }
  clip_gradients(grads, cfg.clip_norm);
  adam_step(state.params, grads, state.adam, lr, cfg);
  LossRecord rec{step, lr, losses.kmp, losses.cgsa, losses.total};
  state.history.push_back(rec);
  return rec;
}

}  // namespace kgbilm
