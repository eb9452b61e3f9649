#ifndef TRAJSIM_NN_MATRIX_HPP_
#define TRAJSIM_NN_MATRIX_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace trajsim::nn {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// c += a * b
void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c += a * b^T
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c += a^T * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);

Matrix matmul(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& dst, const Matrix& src);

}  // namespace trajsim::nn

#endif  // TRAJSIM_NN_MATRIX_HPP_
