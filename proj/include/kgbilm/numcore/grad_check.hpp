#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kgbilm/numcore/tape.hpp"

namespace kgbilm {

template <class T>
struct NamedParam {
  std::string name;
  BasicTensor<T>* tensor = nullptr;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Builds a scalar loss on `tape` from leaves bound to the current parameter
/// values (one leaf per parameter, in order).
template <class T>
using LossBuilder = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

/// Compares reverse-mode gradients against central differences
///   (f(p + step) - f(p - step)) / (2 step)
/// for every entry of every parameter. The error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// `f` must be deterministic (any randomness seeded inside the builder).
template <class T>
GradCheckReport grad_check(const LossBuilder<T>& f, const std::vector<NamedParam<T>>& params,
                           T step) {
  auto evaluate = [&](bool with_grad, std::vector<BasicTensor<T>>* grads) {
    Tape<T> tape;
    std::vector<Var<T>> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(*p.tensor, true));
    Var<T> loss = f(tape, leaves);
    const T value = loss.value().item();
    if (with_grad) {
      tape.backward(loss);
      for (const auto& leaf : leaves) grads->push_back(tape.grad(leaf));
    }
    return value;
  };

  std::vector<BasicTensor<T>> analytic;
  const T base = evaluate(true, &analytic);
  if (!std::isfinite(base)) throw NumericalError("grad_check: loss is not finite at the base point");

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& tensor = *params[k].tensor;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const T saved = tensor[i];
      tensor[i] = saved + step;
      const T up = evaluate(false, nullptr);
      tensor[i] = saved - step;
      const T down = evaluate(false, nullptr);
      tensor[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("grad_check: loss not finite when perturbing " + params[k].name + "[" +
                             std::to_string(i) + "]");
      }
      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * step);
      const double an = analytic[k][i];
      const double denom = std::max({std::abs(an), std::abs(numeric), 1e-8});
      const double err = std::abs(an - numeric) / denom;
      ++report.entries_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_param = params[k].name;
        report.worst_index = i;
        report.analytic = an;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace kgbilm
