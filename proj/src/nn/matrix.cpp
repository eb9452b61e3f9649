#include "trajsim/nn/matrix.hpp"

#include <cassert>

namespace trajsim::nn {

void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols);
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* ci = c.data.data() + i * n;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      // Skipping exact zeros keeps masked (zero-weight) terms out of the sum.
      if (aik == 0.0) continue;
      const double* bk = b.data.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows);
  const std::size_t kk = a.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.data.data() + i * kk;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.data.data() + j * kk;
      double s = 0.0;
      for (std::size_t k = 0; k < kk; ++k) s += ai[k] * bj[k];
      c.data[i * c.cols + j] += s;
    }
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols);
  const std::size_t n = b.cols;
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* br = b.data.data() + r * n;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double ari = a.data[r * a.cols + i];
      if (ari == 0.0) continue;
      double* ci = c.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ari * br[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  gemm_nn_acc(a, b, c);
  return c;
}

void add_inplace(Matrix& dst, const Matrix& src) {
  assert(dst.same_shape(src));
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace trajsim::nn
