#ifndef TRAJSIM_NN_TAPE_HPP_
#define TRAJSIM_NN_TAPE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "trajsim/nn/matrix.hpp"

namespace trajsim::nn {

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;
};

// Validity flags for sequence positions; 1 = real, 0 = padding.
using Mask = std::vector<std::uint8_t>;

inline std::size_t count_valid(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m) n += v != 0;
  return n;
}

/// Reverse-mode autodiff over Matrix values.
///
/// Nodes are appended in evaluation order; backward() walks them in reverse
/// and calls each node's closure with its accumulated output gradient.
/// Parameters are referenced, not copied, and must outlive the tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var parameter(const Matrix& value, std::size_t slot);
  Var record(Matrix value, bool requires_grad, Backward fn);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of v, zero-allocated on first use.
  Matrix& grad(Var v);
  bool has_grad(Var v) const { return nodes_[v.id].has_grad; }

  void backward(Var root, const Matrix& seed);

  // Calls f(slot, grad) for each parameter leaf that received a gradient,
  // in leaf creation order.
  void for_each_param_grad(const std::function<void(std::size_t, const Matrix&)>& f) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::ptrdiff_t slot = -1;
    Backward backward;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace trajsim::nn

#endif  // TRAJSIM_NN_TAPE_HPP_
