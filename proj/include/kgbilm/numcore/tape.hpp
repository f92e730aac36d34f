#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "kgbilm/numcore/tensor.hpp"

namespace kgbilm {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t index = 0;

  const BasicTensor<T>& value() const { return tape->value(*this); }
  const BasicTensor<T>& grad() const { return tape->grad(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

/// Gradient seed for a non-scalar output, used when several losses are
/// combined across tapes (the caller supplies dL/d(output)).
template <class T>
struct Seed {
  Var<T> var;
  BasicTensor<T> grad;
};

/// Append-only record of operations. Nodes are stored in creation order, so
/// every node's inputs precede it and reverse order is a valid topological
/// order for backpropagation. A tape is confined to a single thread.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(BasicTensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(BasicTensor<T> value) { return leaf(std::move(value), false); }

  /// Records an operation result. The backward closure is kept only when at
  /// least one input participates in differentiation.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  Var<T> record(BasicTensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.index].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
    return {this, nodes_.size() - 1};
  }

  const BasicTensor<T>& value(Var<T> v) const { return nodes_[v.index].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.index].requires_grad; }

  /// Gradient of the last backward pass; zeros when the node received none.
  const BasicTensor<T>& grad(Var<T> v) {
    Node& n = nodes_[v.index];
    if (n.grad.empty() && !n.value.empty()) n.grad = BasicTensor<T>(n.value.shape());
    return n.grad;
  }

  /// Mutable gradient accumulator used by backward closures.
  BasicTensor<T>& grad_ref(std::size_t index) {
    Node& n = nodes_[index];
    if (n.grad.size() != n.value.size()) n.grad = BasicTensor<T>(n.value.shape());
    return n.grad;
  }
  const BasicTensor<T>& value_at(std::size_t index) const { return nodes_[index].value; }
  bool requires_grad_at(std::size_t index) const { return nodes_[index].requires_grad; }

  void backward(Var<T> loss) {
    if (value(loss).size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " +
                       shape_str(value(loss).shape()));
    }
    BasicTensor<T> one(value(loss).shape(), T{1});
    Seed<T> seed{loss, std::move(one)};
    backward(std::span<const Seed<T>>(&seed, 1));
  }

  void backward(std::span<const Seed<T>> seeds) {
    for (auto& n : nodes_) n.grad = BasicTensor<T>();
    std::size_t top = 0;
    for (const auto& s : seeds) {
      if (s.grad.shape() != value(s.var).shape() && s.grad.size() != value(s.var).size()) {
        throw_shape("backward seed", s.grad.shape(), value(s.var).shape());
      }
      auto& g = grad_ref(s.var.index);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
      top = std::max(top, s.var.index + 1);
    }
    for (std::size_t i = top; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace kgbilm
