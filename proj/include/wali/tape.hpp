// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wali/tensor.hpp"

namespace wali {

// Handle to a node on a Tape. Only meaningful together with the tape that
// produced it.
struct Var {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

// A named trainable tensor. Lives outside any tape; gradients found during
// Tape::backward are accumulated into `grad` for every tape binding created
// with Tape::param. The optimizer owns clearing them between steps.
template <typename T>
struct Parameter {
  std::string name;
  ComplexTensor<T> value;
  ComplexTensor<T> grad;  // empty shape until first accumulation

  Parameter() = default;
  Parameter(std::string n, ComplexTensor<T> v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad = ComplexTensor<T>(); }

  void ensure_grad() {
    if (grad.shape != value.shape) grad = ComplexTensor<T>(value.shape);
  }
};

// Reverse-mode tape. Operations append nodes in evaluation order; backward
// replays them once, in reverse. Node values are immutable once recorded.
// A tape must stay confined to one thread.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int32_t self)>;

  Var leaf(ComplexTensor<T> value, bool requires_grad = false) {
    return push_node(std::move(value), requires_grad, nullptr);
  }

  // Leaf bound to an external Parameter: after backward, the node gradient is
  // added into p.grad. Multiple bindings of the same parameter accumulate.
  Var param(Parameter<T>& p) {
    Var v = push_node(p.value, /*requires_grad=*/grads_enabled_, nullptr);
    if (grads_enabled_) bindings_.emplace_back(v.idx, &p);
    return v;
  }

  // Used by operations. requires_grad is inferred from the inputs; constant
  // subgraphs carry no backward closure at all.
  Var op(ComplexTensor<T> value, std::initializer_list<Var> inputs, BackwardFn bw) {
    bool rg = false;
    for (Var v : inputs) rg = rg || needs(v);
    return push_node(std::move(value), rg && grads_enabled_, rg && grads_enabled_ ? std::move(bw) : nullptr);
  }

  Var op(ComplexTensor<T> value, const std::vector<Var>& inputs, BackwardFn bw) {
    bool rg = false;
    for (Var v : inputs) rg = rg || needs(v);
    return push_node(std::move(value), rg && grads_enabled_, rg && grads_enabled_ ? std::move(bw) : nullptr);
  }

  const ComplexTensor<T>& val(Var v) const { return node(v.idx).value; }

  bool needs(Var v) const { return node(v.idx).requires_grad; }

  // Gradient of a node after backward. Zero tensor if the node was never on a
  // path to the loss.
  const ComplexTensor<T>& grad(Var v) const {
    const Node& n = node(v.idx);
    if (n.grad.shape != n.value.shape) {
      static thread_local ComplexTensor<T> zero;
      zero = ComplexTensor<T>(n.value.shape);
      return zero;
    }
    return n.grad;
  }

  // Accumulation target for backward closures. Allocates zeros on first use.
  ComplexTensor<T>& grad_mut(Var v) {
    Node& n = node(v.idx);
    if (n.grad.shape != n.value.shape) n.grad = ComplexTensor<T>(n.value.shape);
    return n.grad;
  }

  bool has_grad(Var v) const { return node(v.idx).grad.shape == node(v.idx).value.shape; }

  // Disables gradient tracking for nodes recorded while off (inference).
  void set_grads_enabled(bool on) { grads_enabled_ = on; }

  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a real scalar loss: loss value is the real plane of a
  // one-element tensor. Runs once per tape.
  void backward(Var loss) {
    if (consumed_) throw std::runtime_error("Tape::backward: tape already replayed; re-record the graph");
    consumed_ = true;
    Node& ln = node(loss.idx);
    if (ln.value.numel() != 1) {
      throw std::runtime_error("Tape::backward: loss must be scalar, got " + shape_str(ln.value.shape));
    }
    if (!ln.requires_grad) return;  // constant loss: all gradients are zero
    grad_mut(loss).re[0] = T(1);
    for (int32_t i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (n.backward && n.requires_grad && n.grad.shape == n.value.shape) {
        n.backward(*this, i);
      }
    }
    for (auto& [idx, p] : bindings_) {
      Node& n = nodes_[size_t(idx)];
      if (n.grad.shape != n.value.shape) continue;
      p->ensure_grad();
      const int64_t m = n.value.numel();
      for (int64_t k = 0; k < m; ++k) {
        p->grad.re[size_t(k)] += n.grad.re[size_t(k)];
        p->grad.im[size_t(k)] += n.grad.im[size_t(k)];
      }
    }
  }

 private:
  struct Node {
    ComplexTensor<T> value;
    ComplexTensor<T> grad;  // empty until touched
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(int32_t i) {
    if (i < 0 || size_t(i) >= nodes_.size()) throw std::runtime_error("Tape: bad Var handle");
    return nodes_[size_t(i)];
  }
  const Node& node(int32_t i) const {
    if (i < 0 || size_t(i) >= nodes_.size()) throw std::runtime_error("Tape: bad Var handle");
    return nodes_[size_t(i)];
  }

  Var push_node(ComplexTensor<T> value, bool rg, BackwardFn bw) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{int32_t(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int32_t, Parameter<T>*>> bindings_;
  bool consumed_ = false;
  bool grads_enabled_ = true;
};

}  // namespace wali
