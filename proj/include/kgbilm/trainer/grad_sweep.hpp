#pragma once

#include "kgbilm/numcore/grad_check.hpp"
#include "kgbilm/trainer/train.hpp"

namespace kgbilm {

/// Two layers, d=16, sequences of at most 8 tokens, a batch of two.
inline TrainConfig toy_grad_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.bka.layers = 2;
  c.bka.model_dim = 16;
  c.bka.heads = 2;
  c.bka.head_dim = 8;
  c.bka.ffn_dim = 32;
  c.bka.max_len = 8;
  c.batch_size = 2;
  c.subgraph_max_triples = 2;
  c.gamma = 0.3;
  c.lambda_cgsa = 0.5;
  c.cgsa.tau = 0.5;
  c.threads = 1;
  c.seed = seed;
  return c;
}

inline KnowledgeGraph toy_grad_graph() {
  KnowledgeGraph kg;
  kg.add_triple("oak", "grows_in", "forest");
  kg.add_triple("pine", "grows_in", "forest");
  kg.add_triple("forest", "part_of", "valley");
  kg.add_triple("river", "flows_through", "valley");
  kg.add_triple("trout", "lives_in", "river");
  kg.set_description(*kg.find_entity("oak"), "broad leaved tree");
  kg.set_description(*kg.find_entity("river"), "fresh water stream");
  return kg;
}

/// Finite-difference sweep over every parameter of the toy model under the
/// joint KMP + CGSA objective, in double precision with dropout active.
inline GradCheckReport toy_grad_check(std::uint64_t seed = 0, double step = 1e-4) {
  const auto cfg = toy_grad_config(seed);
  const auto kg = toy_grad_graph();
  const auto vocab = build_vocab(kg);
  const TrainingData data(kg, vocab);
  const auto origins = sample_origins(data, cfg, 1);
  std::vector<PreparedSample> samples;
  for (std::size_t k = 0; k < origins.size(); ++k) samples.push_back(prepare_sample(origins[k], data, cfg, 1, k));

  Rng rng = derive_rng({seed, 0x1417u});
  auto params = init_params<double>(cfg.bka, vocab.size(), rng);
  std::vector<NamedParam<double>> named;
  params.for_each([&](const std::string& name, BasicTensor<double>& t, bool) { named.push_back({name, &t}); });

  const LossBuilder<double> f = [&](Tape<double>& tape, const std::vector<Var<double>>& leaves) {
    ModelVars<double> v = bind_params(tape, params, false);
    std::size_t k = 0;
    for (Var<double>* slot : {&v.token_embedding, &v.position_embedding, &v.kind_embedding}) *slot = leaves[k++];
    for (auto& l : v.layers) {
      for (Var<double>* slot : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ln1_gain, &l.ln1_bias, &l.ffn_in, &l.ffn_out,
                                &l.ln2_gain, &l.ln2_bias}) {
        *slot = leaves[k++];
      }
    }
    v.output_weight = leaves[k++];
    v.output_bias = leaves[k++];
    return joint_loss(v, samples, cfg, true);
  };
  return grad_check(f, named, step);
}

}  // namespace kgbilm
