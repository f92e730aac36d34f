#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "kgbilm/bka/config.hpp"
#include "kgbilm/numcore/tensor.hpp"
#include "kgbilm/seqbuild/serialize.hpp"

namespace kgbilm {

template <class T>
struct LayerParams {
  BasicTensor<T> wq, wk, wv, wo;  // d x d
  BasicTensor<T> ln1_gain, ln1_bias;
  BasicTensor<T> ffn_in;   // d x ffn
  BasicTensor<T> ffn_out;  // ffn x d
  BasicTensor<T> ln2_gain, ln2_bias;
};

/// Every trainable tensor of the model. `for_each` visits them in a fixed
/// order; optimizer state, checkpoints and gradient buffers rely on it.
template <class T>
struct ModelParams {
  BasicTensor<T> token_embedding;     // |vocab| x d
  BasicTensor<T> position_embedding;  // max_len x d
  BasicTensor<T> kind_embedding;      // kinds x d
  std::vector<LayerParams<T>> layers;
  BasicTensor<T> output_weight;  // |vocab| x d
  BasicTensor<T> output_bias;    // 1 x |vocab|

  /// f(name, tensor, decays); `decays` is false for embeddings, biases and
  /// layer-norm parameters.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t num_tensors() const { return 5 + 10 * layers.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const BasicTensor<T>& t, bool) { n += t.size(); });
    return n;
  }

  std::size_t vocab_size() const { return token_embedding.rows(); }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.token_embedding = token_embedding.template cast<U>();
    out.position_embedding = position_embedding.template cast<U>();
    out.kind_embedding = kind_embedding.template cast<U>();
    for (const auto& l : layers) {
      out.layers.push_back({l.wq.template cast<U>(), l.wk.template cast<U>(), l.wv.template cast<U>(),
                            l.wo.template cast<U>(), l.ln1_gain.template cast<U>(), l.ln1_bias.template cast<U>(),
                            l.ffn_in.template cast<U>(), l.ffn_out.template cast<U>(),
                            l.ln2_gain.template cast<U>(), l.ln2_bias.template cast<U>()});
    }
    out.output_weight = output_weight.template cast<U>();
    out.output_bias = output_bias.template cast<U>();
    return out;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    std::vector<const BasicTensor<T>*> ta, tb;
    a.for_each([&](const std::string&, const BasicTensor<T>& t, bool) { ta.push_back(&t); });
    b.for_each([&](const std::string&, const BasicTensor<T>& t, bool) { tb.push_back(&t); });
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (!(*ta[i] == *tb[i])) return false;
    return true;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f("token_embedding", self.token_embedding, false);
    f("position_embedding", self.position_embedding, false);
    f("kind_embedding", self.kind_embedding, false);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      f(p + "wq", l.wq, true);
      f(p + "wk", l.wk, true);
      f(p + "wv", l.wv, true);
      f(p + "wo", l.wo, true);
      f(p + "ln1_gain", l.ln1_gain, false);
      f(p + "ln1_bias", l.ln1_bias, false);
      f(p + "ffn_in", l.ffn_in, true);
      f(p + "ffn_out", l.ffn_out, true);
      f(p + "ln2_gain", l.ln2_gain, false);
      f(p + "ln2_bias", l.ln2_bias, false);
    }
    f("output_weight", self.output_weight, true);
    f("output_bias", self.output_bias, false);
  }
};

namespace detail {

template <class T, class Rng>
BasicTensor<T> normal_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  auto m = BasicTensor<T>::matrix(r, c);
  for (auto& v : m.storage()) v = static_cast<T>(dist(rng));
  return m;
}

inline double xavier_std(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace detail

/// Embeddings and output projection ~ N(0, 0.02^2); projection matrices use
/// Xavier-normal; layer-norm gains 1 and biases 0.
template <class T, class Rng>
ModelParams<T> init_params(const BkaConfig& cfg, std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  if (vocab_size == 0) throw ConfigError("init_params: empty vocabulary");
  const std::size_t d = cfg.model_dim, f = cfg.ffn_dim;
  constexpr double kEmbedStd = 0.02;
  ModelParams<T> p;
  p.token_embedding = detail::normal_matrix<T>(vocab_size, d, kEmbedStd, rng);
  p.position_embedding = detail::normal_matrix<T>(cfg.max_len, d, kEmbedStd, rng);
  p.kind_embedding = detail::normal_matrix<T>(kNumTokenKinds, d, kEmbedStd, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    LayerParams<T> l;
    l.wq = detail::normal_matrix<T>(d, d, detail::xavier_std(d, d), rng);
    l.wk = detail::normal_matrix<T>(d, d, detail::xavier_std(d, d), rng);
    l.wv = detail::normal_matrix<T>(d, d, detail::xavier_std(d, d), rng);
    l.wo = detail::normal_matrix<T>(d, d, detail::xavier_std(d, d), rng);
    l.ln1_gain = BasicTensor<T>({1, d}, T{1});
    l.ln1_bias = BasicTensor<T>({1, d}, T{0});
    l.ffn_in = detail::normal_matrix<T>(d, f, detail::xavier_std(d, f), rng);
    l.ffn_out = detail::normal_matrix<T>(f, d, detail::xavier_std(f, d), rng);
    l.ln2_gain = BasicTensor<T>({1, d}, T{1});
    l.ln2_bias = BasicTensor<T>({1, d}, T{0});
    p.layers.push_back(std::move(l));
  }
  p.output_weight = detail::normal_matrix<T>(vocab_size, d, kEmbedStd, rng);
  p.output_bias = BasicTensor<T>({1, vocab_size}, T{0});
  return p;
}

/// Throws ShapeError unless every tensor matches `cfg` and `vocab_size`.
template <class T>
void check_param_shapes(const ModelParams<T>& p, const BkaConfig& cfg, std::size_t vocab_size) {
  const std::size_t d = cfg.model_dim, f = cfg.ffn_dim;
  auto expect = [](const std::string& name, const BasicTensor<T>& t, Shape s) {
    if (t.shape() != s) throw ShapeError("params: " + name + " has shape " + shape_str(t.shape()) + ", expected " + shape_str(s));
  };
  if (p.layers.size() != cfg.layers) {
    throw ShapeError("params: " + std::to_string(p.layers.size()) + " layers, expected " + std::to_string(cfg.layers));
  }
  expect("token_embedding", p.token_embedding, {vocab_size, d});
  expect("position_embedding", p.position_embedding, {cfg.max_len, d});
  expect("kind_embedding", p.kind_embedding, {kNumTokenKinds, d});
  for (const auto& l : p.layers) {
    for (const auto* w : {&l.wq, &l.wk, &l.wv, &l.wo}) expect("attention weight", *w, {d, d});
    for (const auto* v : {&l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias}) expect("layer norm", *v, {1, d});
    expect("ffn_in", l.ffn_in, {d, f});
    expect("ffn_out", l.ffn_out, {f, d});
  }
  expect("output_weight", p.output_weight, {vocab_size, d});
  expect("output_bias", p.output_bias, {1, vocab_size});
}

}  // namespace kgbilm
