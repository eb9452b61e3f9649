#include "trajsim/nn/cde.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace trajsim::nn {

namespace {

KnotWeights combine(std::size_t n, std::size_t k, double c00, double c10, double c01, double c11) {
  if (n < 2) throw std::invalid_argument("hermite spline needs at least 2 knots");
  if (k + 1 >= n) throw std::invalid_argument("hermite spline segment out of range");
  KnotWeights kw;
  // X = c00 x_k + c10 m_k + c01 x_{k+1} + c11 m_{k+1}, m_{k+1} = x_{k+1} - x_k
  if (k == 0) {
    // m_0 = x_1 - x_0
    kw.idx = {0, 0, 1};
    kw.w = {0.0, c00 - c10 - c11, c01 + c10 + c11};
  } else {
    kw.idx = {k - 1, k, k + 1};
    kw.w = {-c10, c00 + c10 - c11, c01 + c11};
  }
  return kw;
}

struct Field {
  std::size_t h;
  std::size_t d;
  const Matrix& w1;
  const Matrix& b1;
  const Matrix& w2;
  const Matrix& b2;
};

struct EvalCache {
  std::vector<double> a;  // pre-activation of hidden layer
  std::vector<double> t;  // tanh output, h x d row-major
};

// out = f(z) u
void eval_field(const Field& f, const double* z, const double* u, double* out, EvalCache& c) {
  const std::size_t h = f.h;
  const std::size_t d = f.d;
  const std::size_t hd = h * d;
  c.a.assign(f.b1.data.begin(), f.b1.data.end());
  for (std::size_t i = 0; i < h; ++i) {
    const double zi = z[i];
    if (zi == 0.0) continue;
    const double* wr = f.w1.data.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) c.a[j] += zi * wr[j];
  }
  c.t.assign(f.b2.data.begin(), f.b2.data.end());
  for (std::size_t i = 0; i < h; ++i) {
    const double r = c.a[i] > 0.0 ? c.a[i] : 0.0;
    if (r == 0.0) continue;
    const double* wr = f.w2.data.data() + i * hd;
    for (std::size_t j = 0; j < hd; ++j) c.t[j] += r * wr[j];
  }
  for (std::size_t i = 0; i < h; ++i) {
    double acc = 0.0;
    double* ti = c.t.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      ti[j] = std::tanh(ti[j]);
      acc += ti[j] * u[j];
    }
    out[i] = acc;
  }
}

struct FieldGrads {
  Matrix w1, b1, w2, b2;
};

// Accumulates parameter grads, writes gu (d) and adds gz (h).
void field_vjp(const Field& f, const double* z, const double* u, const EvalCache& c, const double* g_out,
               FieldGrads& pg, double* gu, double* gz, std::vector<double>& go, std::vector<double>& gr) {
  const std::size_t h = f.h;
  const std::size_t d = f.d;
  const std::size_t hd = h * d;
  go.assign(hd, 0.0);
  for (std::size_t j = 0; j < d; ++j) gu[j] = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    const double gi = g_out[i];
    const double* ti = c.t.data() + i * d;
    double* goi = go.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      gu[j] += ti[j] * gi;
      goi[j] = gi * u[j] * (1.0 - ti[j] * ti[j]);
    }
  }
  for (std::size_t j = 0; j < hd; ++j) pg.b2.data[j] += go[j];
  gr.assign(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    if (c.a[i] <= 0.0) continue;
    const double r = c.a[i];
    const double* wr = f.w2.data.data() + i * hd;
    double* gw = pg.w2.data.data() + i * hd;
    double acc = 0.0;
    for (std::size_t j = 0; j < hd; ++j) {
      gw[j] += r * go[j];
      acc += wr[j] * go[j];
    }
    gr[i] = acc;
  }
  for (std::size_t j = 0; j < h; ++j) pg.b1.data[j] += gr[j];
  for (std::size_t i = 0; i < h; ++i) {
    const double* wr = f.w1.data.data() + i * h;
    double* gw = pg.w1.data.data() + i * h;
    double acc = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      gw[j] += z[i] * gr[j];
      acc += wr[j] * gr[j];
    }
    gz[i] += acc;
  }
}

void spline_derivative(const std::vector<const double*>& rows, std::size_t d, std::size_t k, double s,
                       double* u, KnotWeights& kw) {
  kw = hermite_derivative_weights(rows.size(), k, s);
  for (std::size_t j = 0; j < d; ++j) u[j] = 0.0;
  for (std::size_t q = 0; q < 3; ++q) {
    if (kw.w[q] == 0.0) continue;
    const double* xr = rows[kw.idx[q]];
    for (std::size_t j = 0; j < d; ++j) u[j] += kw.w[q] * xr[j];
  }
}

}  // namespace

KnotWeights hermite_value_weights(std::size_t n, std::size_t k, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return combine(n, k, 2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2);
}

KnotWeights hermite_derivative_weights(std::size_t n, std::size_t k, double s) {
  const double s2 = s * s;
  return combine(n, k, 6 * s2 - 6 * s, 3 * s2 - 4 * s + 1, -6 * s2 + 6 * s, 3 * s2 - 2 * s);
}

Var cde_integrate(Var x, Var z0, Var w1, Var b1, Var w2, Var b2, std::size_t steps, const Mask& mask) {
  Tape& tp = *x.tape;
  for (Var v : {z0, w1, b1, w2, b2}) {
    if (v.tape != x.tape) throw std::invalid_argument("cde_integrate: operands live on different tapes");
  }
  const Matrix& xv = tp.value(x);
  const std::size_t d = xv.cols;
  const std::size_t h = tp.value(z0).cols;
  if (tp.value(z0).rows != 1) throw std::invalid_argument("cde_integrate: z0 must be a row vector");
  if (tp.value(w1).rows != h || tp.value(w1).cols != h) throw std::invalid_argument("cde_integrate: w1 shape");
  if (tp.value(b1).rows != 1 || tp.value(b1).cols != h) throw std::invalid_argument("cde_integrate: b1 shape");
  if (tp.value(w2).rows != h || tp.value(w2).cols != h * d) throw std::invalid_argument("cde_integrate: w2 shape");
  if (tp.value(b2).rows != 1 || tp.value(b2).cols != h * d) throw std::invalid_argument("cde_integrate: b2 shape");
  if (mask.size() != xv.rows) throw std::invalid_argument("cde_integrate: mask length mismatch");
  if (steps == 0) throw std::invalid_argument("cde_integrate: steps must be positive");

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) valid.push_back(i);
  }
  if (valid.size() < 2) throw std::invalid_argument("cde_integrate: spline needs at least 2 valid rows");
  std::vector<const double*> rows;
  for (std::size_t i : valid) rows.push_back(xv.data.data() + i * d);

  const Field f{h, d, tp.value(w1), tp.value(b1), tp.value(w2), tp.value(b2)};
  const std::size_t segs = valid.size() - 1;
  const double dt = 1.0 / static_cast<double>(steps);

  // z at the start of every step, for backward
  std::vector<double> states(segs * steps * h);
  Matrix out(xv.rows, h);
  std::vector<double> z(tp.value(z0).data);
  std::copy(z.begin(), z.end(), out.row(valid[0]).begin());

  std::vector<double> u0(d), uh(d), u1(d), k1(h), k2(h), k3(h), k4(h), tmp(h);
  EvalCache cache;
  KnotWeights kw;
  for (std::size_t k = 0; k < segs; ++k) {
    for (std::size_t j = 0; j < steps; ++j) {
      std::copy(z.begin(), z.end(), states.begin() + static_cast<std::ptrdiff_t>((k * steps + j) * h));
      const double s0 = static_cast<double>(j) * dt;
      spline_derivative(rows, d, k, s0, u0.data(), kw);
      spline_derivative(rows, d, k, s0 + 0.5 * dt, uh.data(), kw);
      spline_derivative(rows, d, k, s0 + dt, u1.data(), kw);
      eval_field(f, z.data(), u0.data(), k1.data(), cache);
      for (std::size_t i = 0; i < h; ++i) tmp[i] = z[i] + 0.5 * dt * k1[i];
      eval_field(f, tmp.data(), uh.data(), k2.data(), cache);
      for (std::size_t i = 0; i < h; ++i) tmp[i] = z[i] + 0.5 * dt * k2[i];
      eval_field(f, tmp.data(), uh.data(), k3.data(), cache);
      for (std::size_t i = 0; i < h; ++i) tmp[i] = z[i] + dt * k3[i];
      eval_field(f, tmp.data(), u1.data(), k4.data(), cache);
      for (std::size_t i = 0; i < h; ++i) z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    std::copy(z.begin(), z.end(), out.row(valid[k + 1]).begin());
  }

  const bool need = tp.requires_grad(x) || tp.requires_grad(z0) || tp.requires_grad(w1) ||
                    tp.requires_grad(b1) || tp.requires_grad(w2) || tp.requires_grad(b2);
  return tp.record(std::move(out), need,
                   [x, z0, w1, b1, w2, b2, steps, h, d, valid, states = std::move(states)](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(x);
    std::vector<const double*> rows;
    for (std::size_t i : valid) rows.push_back(xv.data.data() + i * d);
    const Field f{h, d, t.value(w1), t.value(b1), t.value(w2), t.value(b2)};
    const std::size_t segs = valid.size() - 1;
    const double dt = 1.0 / static_cast<double>(steps);

    FieldGrads pg{Matrix(h, h), Matrix(1, h), Matrix(h, h * d), Matrix(1, h * d)};
    Matrix gx(xv.rows, d);
    std::vector<double> gz(g.row(valid[segs]).begin(), g.row(valid[segs]).end());

    std::vector<double> u0(d), uh(d), u1(d), k1(h), k2(h), k3(h), z2(h), z3(h), z4(h), scratch(h);
    std::vector<double> gk1(h), gk2(h), gk3(h), gk4(h), gzs(h), gu(d), go, gr;
    EvalCache c1, c2, c3, c4;
    KnotWeights w0, wh, w1k;
    const auto scatter = [&](const KnotWeights& kw, const std::vector<double>& gu) {
      for (std::size_t q = 0; q < 3; ++q) {
        if (kw.w[q] == 0.0) continue;
        double* gr = gx.data.data() + valid[kw.idx[q]] * d;
        for (std::size_t j = 0; j < d; ++j) gr[j] += kw.w[q] * gu[j];
      }
    };

    for (std::size_t k = segs; k-- > 0;) {
      for (std::size_t j = steps; j-- > 0;) {
        const double* z = states.data() + (k * steps + j) * h;
        const double s0 = static_cast<double>(j) * dt;
        spline_derivative(rows, d, k, s0, u0.data(), w0);
        spline_derivative(rows, d, k, s0 + 0.5 * dt, uh.data(), wh);
        spline_derivative(rows, d, k, s0 + dt, u1.data(), w1k);
        eval_field(f, z, u0.data(), k1.data(), c1);
        for (std::size_t i = 0; i < h; ++i) z2[i] = z[i] + 0.5 * dt * k1[i];
        eval_field(f, z2.data(), uh.data(), k2.data(), c2);
        for (std::size_t i = 0; i < h; ++i) z3[i] = z[i] + 0.5 * dt * k2[i];
        eval_field(f, z3.data(), uh.data(), k3.data(), c3);
        for (std::size_t i = 0; i < h; ++i) z4[i] = z[i] + dt * k3[i];
        eval_field(f, z4.data(), u1.data(), scratch.data(), c4);

        for (std::size_t i = 0; i < h; ++i) {
          gk1[i] = dt / 6.0 * gz[i];
          gk2[i] = dt / 3.0 * gz[i];
          gk3[i] = dt / 3.0 * gz[i];
          gk4[i] = dt / 6.0 * gz[i];
        }
        // stage 4: input z + dt k3
        std::fill(gzs.begin(), gzs.end(), 0.0);
        field_vjp(f, z4.data(), u1.data(), c4, gk4.data(), pg, gu.data(), gzs.data(), go, gr);
        scatter(w1k, gu);
        for (std::size_t i = 0; i < h; ++i) {
          gz[i] += gzs[i];
          gk3[i] += dt * gzs[i];
        }
        // stage 3: input z + dt/2 k2
        std::fill(gzs.begin(), gzs.end(), 0.0);
        field_vjp(f, z3.data(), uh.data(), c3, gk3.data(), pg, gu.data(), gzs.data(), go, gr);
        scatter(wh, gu);
        for (std::size_t i = 0; i < h; ++i) {
          gz[i] += gzs[i];
          gk2[i] += 0.5 * dt * gzs[i];
        }
        // stage 2: input z + dt/2 k1
        std::fill(gzs.begin(), gzs.end(), 0.0);
        field_vjp(f, z2.data(), uh.data(), c2, gk2.data(), pg, gu.data(), gzs.data(), go, gr);
        scatter(wh, gu);
        for (std::size_t i = 0; i < h; ++i) {
          gz[i] += gzs[i];
          gk1[i] += 0.5 * dt * gzs[i];
        }
        // stage 1: input z
        field_vjp(f, z, u0.data(), c1, gk1.data(), pg, gu.data(), gz.data(), go, gr);
        scatter(w0, gu);
      }
      const auto gk = g.row(valid[k]);
      for (std::size_t i = 0; i < h; ++i) gz[i] += gk[i];
    }

    if (t.requires_grad(x)) add_inplace(t.grad(x), gx);
    if (t.requires_grad(z0)) {
      Matrix& g0 = t.grad(z0);
      for (std::size_t i = 0; i < h; ++i) g0.data[i] += gz[i];
    }
    if (t.requires_grad(w1)) add_inplace(t.grad(w1), pg.w1);
    if (t.requires_grad(b1)) add_inplace(t.grad(b1), pg.b1);
    if (t.requires_grad(w2)) add_inplace(t.grad(w2), pg.w2);
    if (t.requires_grad(b2)) add_inplace(t.grad(b2), pg.b2);
  });
}

}  // namespace trajsim::nn
