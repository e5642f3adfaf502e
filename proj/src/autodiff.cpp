// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/autodiff.hpp"

#include <algorithm>

namespace ecgcloud::nn {

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::constant_ref(const Tensor& value) {
  Node node;
  node.external = &value;
  nodes_.push_back(std::move(node));
  grads_valid_ = false;
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  Var v = constant_ref(p.value);
  Node& n = nodes_.back();
  n.requires_grad = recording_;
  n.param = recording_ ? &p : nullptr;
  return v;
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = recording_ && requires_grad;
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  grads_valid_ = false;
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::grad(Var v) const {
  if (!grads_valid_) throw Error("NO_GRADIENT", "gradients requested before backward()");
  return nodes_.at(v.id).grad;
}

void Tape::backward(Var root) {
  if (!recording_) throw Error("NOT_RECORDING", "backward() on a tape that records no gradients");
  if (nodes_.empty() || root.id >= nodes_.size()) {
    throw Error("BACKWARD_BEFORE_FORWARD", "backward() called before any forward computation");
  }
  if (value_of(root.id).size() != 1) {
    throw Error("NON_SCALAR_ROOT", "backward() root must be a scalar, got " +
                                       shape_string(value_of(root.id).shape()));
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    const Shape& shape = value_of(i).shape();
    if (n.grad.shape() == shape) {
      n.grad.fill(0.0);
    } else {
      n.grad = Tensor(shape);
    }
  }
  if (!nodes_[root.id].requires_grad) {
    throw Error("NO_GRADIENT_PATH", "backward() root does not depend on any parameter");
  }
  nodes_[root.id].grad[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    Node& n = nodes_[i];
    if (n.param == nullptr) continue;
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    std::transform(dst.begin(), dst.end(), src.begin(), dst.begin(), std::plus<>());
    n.param->grad_ready = true;
  }
  grads_valid_ = true;
}

}  // namespace ecgcloud::nn
