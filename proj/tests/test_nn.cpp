#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "trajsim/gradcheck.hpp"
#include "trajsim/nn/cde.hpp"
#include "trajsim/nn/ops.hpp"
#include "trajsim/nn/tape.hpp"

using namespace trajsim;
using namespace trajsim::nn;

namespace {

Matrix rand_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

void check_close(const Matrix& a, const Matrix& b, double tol = 1e-12) {
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= tol);
}

GradCheckResult op_check(const std::string& name, std::vector<Matrix>& leaves, const BlockBuilder& build) {
  LeafList list;
  for (std::size_t i = 0; i < leaves.size(); ++i) list.emplace_back(name + std::to_string(i), &leaves[i]);
  return check_gradients(name, list, build, GradCheckOptions{});
}

}  // namespace

TEST_CASE("gemm helpers match a naive product") {
  std::mt19937_64 rng(1);
  const Matrix a = rand_matrix(4, 5, rng);
  const Matrix b = rand_matrix(5, 3, rng);
  check_close(matmul(a, b), naive_matmul(a, b));
  Matrix bt(3, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) bt(j, i) = b(i, j);
  Matrix c(4, 3);
  gemm_nt_acc(a, bt, c);
  check_close(c, naive_matmul(a, b));
}

TEST_CASE("softmax rows sum to one and masked columns are exactly zero") {
  std::mt19937_64 rng(2);
  Tape t;
  const Var x = t.constant(rand_matrix(3, 5, rng, -5, 5));
  const Mask m{1, 0, 1, 1, 0};
  const Matrix& s = t.value(softmax_rows(x, &m));
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 5; ++c) sum += s(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s(r, 1) == 0.0);
    CHECK(s(r, 4) == 0.0);
  }
}

TEST_CASE("layer norm output has zero mean and unit variance") {
  std::mt19937_64 rng(3);
  Tape t;
  const Var x = t.constant(rand_matrix(2, 8, rng, -3, 3));
  const Var g = t.constant(Matrix(1, 8, 1.0));
  const Var b = t.constant(Matrix(1, 8, 0.0));
  const Matrix& y = t.value(layer_norm(x, g, b, 0.0));
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0, var = 0;
    for (double v : y.row(r)) mean += v / 8;
    for (double v : y.row(r)) var += (v - mean) * (v - mean) / 8;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0));
  }
  const Matrix& gn = t.value(group_norm(x, 2, g, b, 0.0));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t grp = 0; grp < 2; ++grp) {
      double mean = 0;
      for (std::size_t c = 0; c < 4; ++c) mean += gn(r, grp * 4 + c) / 4;
      CHECK(std::abs(mean) < 1e-12);
    }
  }
}

TEST_CASE("attention rows sum to one and ignore masked keys") {
  std::mt19937_64 rng(4);
  const Matrix q = rand_matrix(3, 8, rng);
  Matrix k = rand_matrix(5, 8, rng);
  Matrix v = rand_matrix(5, 8, rng);
  const Mask m{1, 1, 0, 1, 0};
  for (std::size_t h = 0; h < 2; ++h) {
    const Matrix w = attention_weights(q, k, 2, h, m);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += w(r, c);
      CHECK(std::abs(s - 1.0) <= 1e-12);
      CHECK(w(r, 2) == 0.0);
    }
  }
  Tape t;
  const Matrix before = t.value(attention(t.constant(q), t.constant(k), t.constant(v), 2, m));
  for (std::size_t c = 0; c < 8; ++c) {
    k(2, c) = 1e3;
    v(4, c) = -1e3;
  }
  Tape t2;
  CHECK(t2.value(attention(t2.constant(q), t2.constant(k), t2.constant(v), 2, m)) == before);
  Tape t3;
  CHECK_THROWS_AS(attention(t3.constant(q), t3.constant(k), t3.constant(v), 2, Mask(5, 0)), std::invalid_argument);
}

TEST_CASE("single-head attention against a direct formula") {
  std::mt19937_64 rng(5);
  const Matrix q = rand_matrix(2, 4, rng), k = rand_matrix(3, 4, rng), v = rand_matrix(3, 4, rng);
  Tape t;
  const Matrix& out = t.value(attention(t.constant(q), t.constant(k), t.constant(v), 1, Mask(3, 1)));
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> s(3);
    double z = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < 4; ++c) dot += q(i, c) * k(j, c);
      s[j] = std::exp(dot / 2.0);
      z += s[j];
    }
    for (std::size_t c = 0; c < 4; ++c) {
      double e = 0;
      for (std::size_t j = 0; j < 3; ++j) e += s[j] / z * v(j, c);
      CHECK(out(i, c) == doctest::Approx(e).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d same padding against a direct sum") {
  std::mt19937_64 rng(6);
  const Matrix x = rand_matrix(5, 2, rng), w = rand_matrix(6, 3, rng), b = rand_matrix(1, 3, rng);
  const Mask m{1, 1, 1, 1, 0};
  Tape t;
  const Matrix& y = t.value(conv1d_same(t.constant(x), t.constant(w), t.constant(b), 3, m));
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t o = 0; o < 3; ++o) {
      if (!m[r]) {
        CHECK(y(r, o) == 0.0);
        continue;
      }
      double s = b(0, o);
      for (std::size_t tap = 0; tap < 3; ++tap) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(r + tap) - 1;
        if (src < 0 || src >= 5 || !m[static_cast<std::size_t>(src)]) continue;
        for (std::size_t c = 0; c < 2; ++c) s += x(static_cast<std::size_t>(src), c) * w(tap * 2 + c, o);
      }
      CHECK(y(r, o) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("shape mismatches throw") {
  Tape t;
  const Var a = t.constant(Matrix(2, 3));
  const Var b = t.constant(Matrix(2, 3));
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(add(a, t.constant(Matrix(3, 2))), std::invalid_argument);
}

TEST_CASE("l2 normalization gives unit rows and zero rows stay zero") {
  Tape t;
  Matrix x(2, 2);
  x(0, 0) = 3;
  x(0, 1) = 4;
  const Matrix& y = t.value(l2_normalize_rows(t.constant(x)));
  CHECK(y(0, 0) == doctest::Approx(0.6));
  CHECK(y(0, 1) == doctest::Approx(0.8));
  CHECK(y(1, 0) == 0.0);
}

TEST_CASE("op gradients match finite differences") {
  std::mt19937_64 rng(7);
  const Mask mask{1, 1, 1, 0};
  SUBCASE("linear") {
    std::vector<Matrix> l{rand_matrix(4, 3, rng), rand_matrix(3, 5, rng), rand_matrix(1, 5, rng)};
    CHECK(op_check("linear", l, [](Tape&, const std::vector<Var>& v) { return linear(v[0], v[1], v[2]); })
              .max_rel_err < 1e-7);
  }
  SUBCASE("matmul_nt and softmax") {
    std::vector<Matrix> l{rand_matrix(3, 4, rng), rand_matrix(4, 4, rng)};
    CHECK(op_check("smx", l,
                   [&](Tape&, const std::vector<Var>& v) { return softmax_rows(matmul_nt(v[0], v[1]), &mask); })
              .max_rel_err < 1e-6);
  }
  SUBCASE("norms") {
    std::vector<Matrix> l{rand_matrix(3, 8, rng), rand_matrix(1, 8, rng), rand_matrix(1, 8, rng)};
    CHECK(op_check("ln", l, [](Tape&, const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2]); })
              .max_rel_err < 1e-6);
    CHECK(op_check("gn", l, [](Tape&, const std::vector<Var>& v) { return group_norm(v[0], 4, v[1], v[2]); })
              .max_rel_err < 1e-6);
  }
  SUBCASE("pointwise") {
    std::vector<Matrix> l{rand_matrix(3, 4, rng)};
    CHECK(op_check("tanh", l, [](Tape&, const std::vector<Var>& v) { return nn::tanh(v[0]); }).max_rel_err < 1e-6);
    CHECK(op_check("lrelu", l, [](Tape&, const std::vector<Var>& v) { return leaky_relu(v[0], 0.01); })
              .max_rel_err < 1e-6);
    CHECK(op_check("l2", l, [](Tape&, const std::vector<Var>& v) { return l2_normalize_rows(v[0]); }).max_rel_err <
          1e-6);
  }
  SUBCASE("conv and attention") {
    std::vector<Matrix> l{rand_matrix(4, 2, rng), rand_matrix(6, 3, rng), rand_matrix(1, 3, rng)};
    CHECK(op_check("conv", l,
                   [&](Tape&, const std::vector<Var>& v) { return conv1d_same(v[0], v[1], v[2], 3, mask); })
              .max_rel_err < 1e-6);
    std::vector<Matrix> a{rand_matrix(2, 4, rng), rand_matrix(4, 4, rng), rand_matrix(4, 4, rng)};
    CHECK(op_check("attn", a,
                   [&](Tape&, const std::vector<Var>& v) { return attention(v[0], v[1], v[2], 2, mask); })
              .max_rel_err < 1e-6);
  }
  SUBCASE("structural ops") {
    std::vector<Matrix> l{rand_matrix(3, 2, rng), rand_matrix(2, 2, rng), rand_matrix(5, 1, rng)};
    CHECK(op_check("rows", l,
                   [](Tape&, const std::vector<Var>& v) {
                     const Var c = concat_rows(v[0], v[1]);
                     const std::vector<Var> parts{c, scale_rows(c, v[2])};
                     return slice_rows(concat_cols(parts), 1, 3);
                   })
              .max_rel_err < 1e-7);
  }
}

TEST_CASE("hermite weights interpolate knots and slopes") {
  const std::vector<double> x{0.5, 2.0, -1.0, 3.0, 4.5};
  const auto eval = [&](const KnotWeights& kw) {
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i) s += kw.w[i] * x[kw.idx[i]];
    return s;
  };
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    CHECK(eval(hermite_value_weights(x.size(), k, 0.0)) == doctest::Approx(x[k]));
    CHECK(eval(hermite_value_weights(x.size(), k, 1.0)) == doctest::Approx(x[k + 1]));
    const double mk = k == 0 ? x[1] - x[0] : x[k] - x[k - 1];
    CHECK(eval(hermite_derivative_weights(x.size(), k, 0.0)) == doctest::Approx(mk));
    CHECK(eval(hermite_derivative_weights(x.size(), k, 1.0)) == doctest::Approx(x[k + 1] - x[k]));
    // Standard cubic Hermite basis at s = 0.3.
    const double s = 0.3, s2 = s * s, s3 = s2 * s;
    const double ref = (2 * s3 - 3 * s2 + 1) * x[k] + (s3 - 2 * s2 + s) * mk + (-2 * s3 + 3 * s2) * x[k + 1] +
                       (s3 - s2) * (x[k + 1] - x[k]);
    CHECK(eval(hermite_value_weights(x.size(), k, s)) == doctest::Approx(ref));
  }
  CHECK_THROWS_AS(hermite_value_weights(1, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(hermite_value_weights(3, 2, 0.5), std::invalid_argument);
}

TEST_CASE("hermite spline reproduces linear paths exactly") {
  std::vector<double> x(6);
  for (std::size_t k = 0; k < 6; ++k) x[k] = 1.5 - 0.25 * static_cast<double>(k);
  for (std::size_t k = 0; k + 1 < 6; ++k) {
    for (double s : {0.0, 0.25, 0.5, 0.9}) {
      const KnotWeights v = hermite_value_weights(6, k, s);
      const KnotWeights d = hermite_derivative_weights(6, k, s);
      double val = 0, der = 0;
      for (std::size_t i = 0; i < 3; ++i) {
        val += v.w[i] * x[v.idx[i]];
        der += d.w[i] * x[d.idx[i]];
      }
      CHECK(val == doctest::Approx(1.5 - 0.25 * (static_cast<double>(k) + s)));
      CHECK(der == doctest::Approx(-0.25));
    }
  }
}

namespace {

struct CdeFixture {
  Matrix x, z0, w1, b1, w2, b2;
};

CdeFixture cde_fixture(std::size_t n, std::size_t d, std::size_t h, std::mt19937_64& rng) {
  return {rand_matrix(n, d, rng), rand_matrix(1, h, rng), rand_matrix(h, h, rng, -0.5, 0.5),
          rand_matrix(1, h, rng, -0.1, 0.1), rand_matrix(h, h * d, rng, -0.5, 0.5),
          rand_matrix(1, h * d, rng, -0.1, 0.1)};
}

Matrix run_cde(const CdeFixture& f, std::size_t steps, const Mask& mask) {
  Tape t;
  return t.value(cde_integrate(t.constant(f.x), t.constant(f.z0), t.constant(f.w1), t.constant(f.b1),
                               t.constant(f.w2), t.constant(f.b2), steps, mask));
}

}  // namespace

TEST_CASE("cde state is constant when the vector field is zero") {
  std::mt19937_64 rng(8);
  CdeFixture f = cde_fixture(6, 4, 5, rng);
  std::fill(f.w2.data.begin(), f.w2.data.end(), 0.0);
  std::fill(f.b2.data.begin(), f.b2.data.end(), 0.0);
  const Mask mask{1, 1, 1, 1, 1, 0};
  const Matrix z = run_cde(f, 4, mask);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 5; ++c) CHECK(z(r, c) == f.z0(0, c));
  }
  for (std::size_t c = 0; c < 5; ++c) CHECK(z(5, c) == 0.0);
}

TEST_CASE("cde converges under step halving") {
  // Initialization-scale weights and a path with small increments, like the
  // projected point features the model feeds in.
  std::mt19937_64 rng(9);
  const std::size_t h = 8, d = 6;
  CdeFixture f = cde_fixture(8, d, h, rng);
  f.w1 = rand_matrix(h, h, rng, -1 / std::sqrt(8.0), 1 / std::sqrt(8.0));
  f.w2 = rand_matrix(h, h * d, rng, -1 / std::sqrt(8.0), 1 / std::sqrt(8.0));
  for (std::size_t r = 1; r < 8; ++r) {
    for (std::size_t c = 0; c < d; ++c) f.x(r, c) = f.x(r - 1, c) + 0.2 * (f.x(r, c));
  }
  const Mask mask(8, 1);
  const Matrix coarse = run_cde(f, 4, mask);
  const Matrix fine = run_cde(f, 8, mask);
  double worst = 0;
  for (std::size_t i = 0; i < coarse.size(); ++i) worst = std::max(worst, std::abs(coarse.data[i] - fine.data[i]));
  CHECK(worst < 1e-3);
  CHECK(coarse(0, 0) == f.z0(0, 0));
}

TEST_CASE("cde ignores padded rows") {
  std::mt19937_64 rng(10);
  CdeFixture f = cde_fixture(5, 3, 4, rng);
  const Mask mask{1, 1, 1, 1, 0};
  const Matrix a = run_cde(f, 4, mask);
  for (std::size_t c = 0; c < 3; ++c) f.x(4, c) = 100.0;
  CHECK(run_cde(f, 4, mask) == a);
  CHECK_THROWS_AS(run_cde(f, 4, Mask{1, 0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("cde gradients match finite differences") {
  std::mt19937_64 rng(11);
  CdeFixture f = cde_fixture(5, 3, 4, rng);
  const Mask mask{1, 1, 1, 1, 0};
  std::vector<Matrix> l{f.x, f.z0, f.w1, f.b1, f.w2, f.b2};
  const GradCheckResult r = op_check("cde", l, [&](Tape&, const std::vector<Var>& v) {
    return cde_integrate(v[0], v[1], v[2], v[3], v[4], v[5], 3, mask);
  });
  CHECK(r.max_rel_err < 1e-6);
  CHECK(r.checked > 50);
}
