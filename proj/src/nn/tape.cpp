#include "trajsim/nn/tape.hpp"

#include <stdexcept>

namespace trajsim::nn {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& value, std::size_t slot) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  n.slot = static_cast<std::ptrdiff_t>(slot);
  return push(std::move(n));
}

Var Tape::record(Matrix value, bool requires_grad, Backward fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad = Matrix(val.rows, val.cols);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var root, const Matrix& seed) {
  const Matrix& rv = value(root);
  if (!rv.same_shape(seed)) throw std::invalid_argument("Tape::backward: seed shape mismatch");
  if (!nodes_[root.id].requires_grad) return;
  add_inplace(grad(root), seed);
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::for_each_param_grad(const std::function<void(std::size_t, const Matrix&)>& f) const {
  for (const Node& n : nodes_) {
    if (n.slot >= 0 && n.has_grad) f(static_cast<std::size_t>(n.slot), n.grad);
  }
}

}  // namespace trajsim::nn
