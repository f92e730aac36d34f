#pragma once

#include <cmath>
#include <vector>

#include "kgbilm/bka/mask.hpp"
#include "kgbilm/bka/model.hpp"
#include "kgbilm/numcore/ops.hpp"

namespace kgbilm {

template <class T>
struct LayerVars {
  Var<T> wq, wk, wv, wo, ln1_gain, ln1_bias, ffn_in, ffn_out, ln2_gain, ln2_bias;
};

/// Model parameters bound as leaves of one tape.
template <class T>
struct ModelVars {
  Var<T> token_embedding, position_embedding, kind_embedding;
  std::vector<LayerVars<T>> layers;
  Var<T> output_weight, output_bias;

  /// Leaves in ModelParams::for_each order.
  std::vector<Var<T>> all() const {
    std::vector<Var<T>> out{token_embedding, position_embedding, kind_embedding};
    for (const auto& l : layers) {
      out.insert(out.end(), {l.wq, l.wk, l.wv, l.wo, l.ln1_gain, l.ln1_bias, l.ffn_in, l.ffn_out, l.ln2_gain, l.ln2_bias});
    }
    out.push_back(output_weight);
    out.push_back(output_bias);
    return out;
  }
};

template <class T>
ModelVars<T> bind_params(Tape<T>& tape, const ModelParams<T>& p, bool requires_grad = true) {
  auto leaf = [&](const BasicTensor<T>& t) { return tape.leaf(t, requires_grad); };
  ModelVars<T> v;
  v.token_embedding = leaf(p.token_embedding);
  v.position_embedding = leaf(p.position_embedding);
  v.kind_embedding = leaf(p.kind_embedding);
  for (const auto& l : p.layers) {
    v.layers.push_back({leaf(l.wq), leaf(l.wk), leaf(l.wv), leaf(l.wo), leaf(l.ln1_gain), leaf(l.ln1_bias),
                        leaf(l.ffn_in), leaf(l.ffn_out), leaf(l.ln2_gain), leaf(l.ln2_bias)});
  }
  v.output_weight = leaf(p.output_weight);
  v.output_bias = leaf(p.output_bias);
  return v;
}

/// Gradients of the bound leaves, shaped and ordered like `p`.
template <class T>
ModelParams<T> collect_grads(Tape<T>& tape, const ModelVars<T>& vars, const ModelParams<T>& p) {
  ModelParams<T> g = p;
  const auto leaves = vars.all();
  std::size_t k = 0;
  g.for_each([&](const std::string&, BasicTensor<T>& t, bool) { t = tape.grad(leaves[k++]); });
  return g;
}

/// softmax(Q K^T / sqrt(d_h) + mask) V, with optional dropout on the weights.
template <class T, class Rng>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const BasicTensor<T>& mask, double dropout_p, Rng& rng) {
  const std::size_t dh = q.value().cols();
  if (k.value().cols() != dh || k.value().rows() != v.value().rows()) {
    throw_shape("attention", k.value().shape(), v.value().shape());
  }
  auto scores = scale(matmul_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  auto weights = masked_softmax(scores, mask);
  if (dropout_p > 0.0) weights = dropout(weights, dropout_p, rng);
  return matmul(weights, v);
}

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const BasicTensor<T>& mask) {
  const std::size_t dh = q.value().cols();
  if (k.value().cols() != dh || k.value().rows() != v.value().rows()) {
    throw_shape("attention", k.value().shape(), v.value().shape());
  }
  auto scores = scale(matmul_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  return matmul(masked_softmax(scores, mask), v);
}

/// Multi-head attention, W_O, residual + layer norm, then GELU feed-forward,
/// residual + layer norm.
template <class T, class Rng>
Var<T> encoder_layer(Var<T> h, const LayerVars<T>& l, const BasicTensor<T>& mask, const BkaConfig& cfg, bool train,
                     Rng& rng) {
  if (h.value().cols() != cfg.model_dim) {
    throw ShapeError("encoder_layer: hidden width " + std::to_string(h.value().cols()) + ", expected " +
                     std::to_string(cfg.model_dim));
  }
  const double p = train ? cfg.dropout_p : 0.0;
  auto qs = split_heads(matmul(h, l.wq), cfg.heads);
  auto ks = split_heads(matmul(h, l.wk), cfg.heads);
  auto vs = split_heads(matmul(h, l.wv), cfg.heads);
  std::vector<Var<T>> heads;
  heads.reserve(cfg.heads);
  for (std::size_t i = 0; i < cfg.heads; ++i) heads.push_back(attention(qs[i], ks[i], vs[i], mask, p, rng));
  auto attended = matmul(merge_heads<T>(heads), l.wo);
  auto mid = layer_norm(add(h, attended), l.ln1_gain, l.ln1_bias);
  auto ffn = matmul(gelu(matmul(mid, l.ffn_in)), l.ffn_out);
  if (p > 0.0) ffn = dropout(ffn, p, rng);
  return layer_norm(add(mid, ffn), l.ln2_gain, l.ln2_bias);
}

/// Token + position + kind embeddings of `seq`.
template <class T>
Var<T> embed(const ModelVars<T>& v, const TokenSequence& seq) {
  const std::size_t n = seq.size();
  const std::size_t vocab = v.token_embedding.value().rows();
  if (n > v.position_embedding.value().rows()) {
    throw ShapeError("embed: sequence length " + std::to_string(n) + " exceeds max_len " +
                     std::to_string(v.position_embedding.value().rows()));
  }
  std::vector<std::size_t> ids(n), pos(n), kinds(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (seq.ids[i] >= vocab) {
      throw DataError("embed: token id " + std::to_string(seq.ids[i]) + " outside vocabulary of size " +
                      std::to_string(vocab));
    }
    ids[i] = seq.ids[i];
    pos[i] = i;
    kinds[i] = static_cast<std::size_t>(seq.kinds[i]);
  }
  return add(add(gather_rows(v.token_embedding, std::span<const std::size_t>(ids)),
                 gather_rows(v.position_embedding, std::span<const std::size_t>(pos))),
             gather_rows(v.kind_embedding, std::span<const std::size_t>(kinds)));
}

/// Final hidden states H^(L) of `seq` under `mask`.
template <class T, class Rng>
Var<T> encode(const TokenSequence& seq, const BasicTensor<T>& mask, const ModelVars<T>& v, const BkaConfig& cfg,
              bool train, Rng& rng) {
  if (mask.rows() != seq.size() || mask.cols() != seq.size()) {
    throw ShapeError("encode: mask " + shape_str(mask.shape()) + " for sequence of length " + std::to_string(seq.size()));
  }
  auto h = embed(v, seq);
  for (const auto& l : v.layers) h = encoder_layer(h, l, mask, cfg, train, rng);
  return h;
}

}  // namespace kgbilm
