#ifndef TRAJSIM_NN_CDE_HPP_
#define TRAJSIM_NN_CDE_HPP_

#include <array>
#include <cstddef>

#include "trajsim/nn/tape.hpp"

namespace trajsim::nn {

// Linear combination of up to three knot rows (x[k-1], x[k], x[k+1]).
struct KnotWeights {
  std::array<std::size_t, 3> idx{};
  std::array<double, 3> w{};
};

/// Hermite cubic spline through n knots at t = 0..n-1 whose knot slopes are
/// backward differences (forward difference at the first knot). On segment
/// k the curve is a fixed linear combination of knot rows; these return the
/// weights of X(k + s) and X'(k + s) for s in [0, 1].
KnotWeights hermite_value_weights(std::size_t n, std::size_t k, double s);
KnotWeights hermite_derivative_weights(std::size_t n, std::size_t k, double s);

/// Controlled differential equation dz = f(z) X'(t) dt driven by the spline
/// through the valid rows of x (n x d).
///
/// f(z) = tanh(reshape_{h x d}(relu(z w1 + b1) w2 + b2)), with w1: h x h,
/// w2: h x (h*d). Integrated with classic RK4 using `steps` equal steps per
/// knot interval. Returns n x h: row i holds z at the i-th valid knot, z0 at
/// the first; masked rows are zero. Backward recomputes stage values.
Var cde_integrate(Var x, Var z0, Var w1, Var b1, Var w2, Var b2, std::size_t steps, const Mask& mask);

}  // namespace trajsim::nn

#endif  // TRAJSIM_NN_CDE_HPP_
