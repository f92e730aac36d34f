#pragma once

#include <cmath>
#include <vector>

#include "kgbilm/bka/model.hpp"
#include "kgbilm/trainer/config.hpp"

namespace kgbilm {

/// Linear warm-up from 0 to peak_lr over warmup_steps, then linear decay to
/// 0 at total_steps.
inline double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) throw ConfigError("lr_schedule: step beyond total_steps");
  if (step < cfg.warmup_steps) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (cfg.total_steps == cfg.warmup_steps) return cfg.peak_lr;
  return cfg.peak_lr * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

template <class T>
std::vector<BasicTensor<T>*> tensors_of(ModelParams<T>& p) {
  std::vector<BasicTensor<T>*> out;
  p.for_each([&](const std::string&, BasicTensor<T>& t, bool) { out.push_back(&t); });
  return out;
}

template <class T>
std::vector<const BasicTensor<T>*> tensors_of(const ModelParams<T>& p) {
  std::vector<const BasicTensor<T>*> out;
  p.for_each([&](const std::string&, const BasicTensor<T>& t, bool) { out.push_back(&t); });
  return out;
}

template <class T>
double global_norm(const ModelParams<T>& grads) {
  double ss = 0.0;
  for (const auto* t : tensors_of(grads))
    for (T v : t->storage()) ss += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(ss);
}

/// Rescales all gradients by max_norm / norm when the global L2 norm
/// exceeds max_norm. Returns the norm before clipping.
template <class T>
double clip_gradients(ModelParams<T>& grads, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip_gradients: max_norm must be positive");
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericalError("clip_gradients: gradient norm is not finite");
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* t : tensors_of(grads))
      for (T& v : t->storage()) v = static_cast<T>(static_cast<double>(v) * s);
  }
  return norm;
}

template <class T>
struct AdamState {
  ModelParams<T> m, v;
  std::size_t step = 0;

  static AdamState zeros_like(const ModelParams<T>& p) {
    AdamState s{p, p, 0};
    for (auto* t : tensors_of(s.m)) t->fill(T{0});
    for (auto* t : tensors_of(s.v)) t->fill(T{0});
    return s;
  }
};

/// Bias-corrected Adam with decoupled weight decay on the tensors that
/// ModelParams::for_each marks as decaying:
///   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
template <class T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const TrainConfig& cfg) {
  auto ps = tensors_of(params);
  auto gs = tensors_of(grads);
  auto ms = tensors_of(state.m);
  auto vs = tensors_of(state.v);
  std::vector<bool> decays;
  params.for_each([&](const std::string&, const BasicTensor<T>&, bool d) { decays.push_back(d); });
  if (gs.size() != ps.size() || ms.size() != ps.size() || vs.size() != ps.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sets differ");
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto& p = ps[k]->storage();
    const auto& g = gs[k]->storage();
    auto& m = ms[k]->storage();
    auto& v = vs[k]->storage();
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw ShapeError("adam_step: size mismatch in tensor " + std::to_string(k));
    }
    const double wd = decays[k] ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps) + wd * static_cast<double>(p[i]);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * update);
    }
  }
}

}  // namespace kgbilm
