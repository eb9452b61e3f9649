#ifndef TRAJSIM_NN_OPS_HPP_
#define TRAJSIM_NN_OPS_HPP_

#include <span>

#include "trajsim/nn/tape.hpp"

namespace trajsim::nn {

// x (n x in) * w (in x out) + b (1 x out)
Var linear(Var x, Var w, Var b);
Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var scale(Var a, double s);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var tanh(Var a);

// Row-wise softmax. Columns with col_mask == 0 get exactly zero weight.
Var softmax_rows(Var a, const Mask* col_mask = nullptr);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Per-position normalization over `groups` contiguous channel groups.
Var group_norm(Var x, std::size_t groups, Var gamma, Var beta, double eps = 1e-5);

/// 1-D convolution along rows with "same" zero padding.
///
/// w is (kernel * in) x out, tap-major: row t*in + c holds input channel c at
/// offset t - kernel/2. Masked neighbours read as zero; masked outputs are zero.
Var conv1d_same(Var x, Var w, Var b, std::size_t kernel, const Mask& mask);

/// Multi-head scaled dot-product attention over pre-projected q, k, v.
///
/// Keys with key_mask == 0 receive exactly zero weight and are skipped in
/// every sum. Throws if no key is valid.
Var attention(Var q, Var k, Var v, std::size_t heads, const Mask& key_mask);

// Attention weights of one head (nq x nk), evaluated like the fused op.
Matrix attention_weights(const Matrix& q, const Matrix& k, std::size_t heads, std::size_t head,
                         const Mask& key_mask);

Var concat_rows(Var a, Var b);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var select_col(Var x, std::size_t c);
// Multiplies row r of x by s(r, 0).
Var scale_rows(Var x, Var s);
Var l2_normalize_rows(Var x);
// Sum of x (.) w, as a 1 x 1 node.
Var dot_const(Var x, const Matrix& w);

}  // namespace trajsim::nn

#endif  // TRAJSIM_NN_OPS_HPP_
