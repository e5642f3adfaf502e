// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation. A Tape records the forward pass
// as a list of nodes in evaluation order; backward() walks it in reverse and
// accumulates d(root)/d(value) into every Parameter that took part.
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ecgcloud/tensor.hpp"

namespace ecgcloud::nn {

/// Trainable tensor plus its accumulated gradient.
struct Parameter {
  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape()) {}

  Tensor value;
  Tensor grad;
  /// Set by Tape::backward, cleared by zero_grad. Optimizers refuse to step
  /// on parameters whose gradient was never populated.
  bool grad_ready = false;

  void zero_grad() {
    grad.fill(0.0);
    grad_ready = false;
  }
};

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::size_t id = 0;
};

class Tape;
using BackwardFn = std::function<void(Tape&, std::size_t self)>;

class Tape {
 public:
  /// With record_gradients=false no backward closures are kept; the tape is
  /// then a plain forward evaluator.
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Non-owning constant; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf whose gradient is accumulated into `p` by backward(). The node
  /// refers to p.value without copying it.
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const { return value_of(v.id); }
  /// Gradient of the last backward() root with respect to v.
  const Tensor& grad(Var v) const;

  bool recording() const noexcept { return recording_; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var root);

  // Used by operation implementations.
  Var push(Tensor value, bool requires_grad, BackwardFn fn);
  Tensor& grad_of(std::size_t id) { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool grads_valid_ = false;
};

}  // namespace ecgcloud::nn
