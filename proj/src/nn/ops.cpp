#include "trajsim/nn/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace trajsim::nn {

namespace {

bool rg(Var v) { return v.tape->requires_grad(v); }

const Matrix& val(Var v) { return v.tape->value(v); }

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("nn ops: operands live on different tapes");
}

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

// Row-segment normalization shared by layer_norm and group_norm.
struct NormCache {
  Matrix xhat;
  std::vector<double> invstd;  // per (row, group)
};

NormCache normalize_segments(const Matrix& x, std::size_t groups, double eps) {
  const std::size_t seg = x.cols / groups;
  NormCache c{Matrix(x.rows, x.cols), std::vector<double>(x.rows * groups)};
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      const double* xs = x.data.data() + r * x.cols + g * seg;
      double mean = 0.0;
      for (std::size_t k = 0; k < seg; ++k) mean += xs[k];
      mean /= static_cast<double>(seg);
      double var = 0.0;
      for (std::size_t k = 0; k < seg; ++k) var += (xs[k] - mean) * (xs[k] - mean);
      var /= static_cast<double>(seg);
      const double inv = 1.0 / std::sqrt(var + eps);
      c.invstd[r * groups + g] = inv;
      double* hs = c.xhat.data.data() + r * x.cols + g * seg;
      for (std::size_t k = 0; k < seg; ++k) hs[k] = (xs[k] - mean) * inv;
    }
  }
  return c;
}

Var affine_norm(Var x, std::size_t groups, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Matrix& xv = val(x);
  require(groups > 0 && xv.cols % groups == 0, "norm: channels not divisible by groups");
  require(val(gamma).rows == 1 && val(gamma).cols == xv.cols, "norm: gamma shape");
  require(val(beta).rows == 1 && val(beta).cols == xv.cols, "norm: beta shape");
  NormCache cache = normalize_segments(xv, groups, eps);
  const Matrix& gm = val(gamma);
  const Matrix& bt = val(beta);
  Matrix out(xv.rows, xv.cols);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    for (std::size_t c = 0; c < xv.cols; ++c) out(r, c) = cache.xhat(r, c) * gm.data[c] + bt.data[c];
  }
  const bool need = rg(x) || rg(gamma) || rg(beta);
  return x.tape->record(std::move(out), need, [x, gamma, beta, groups, cache = std::move(cache)](Tape& t, const Matrix& g) {
    const Matrix& gm = t.value(gamma);
    const std::size_t cols = g.cols;
    const std::size_t seg = cols / groups;
    if (t.requires_grad(gamma) || t.requires_grad(beta)) {
      Matrix& gg = t.grad(gamma);
      Matrix& gb = t.grad(beta);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          gg.data[c] += g(r, c) * cache.xhat(r, c);
          gb.data[c] += g(r, c);
        }
      }
    }
    if (!t.requires_grad(x)) return;
    Matrix& gx = t.grad(x);
    std::vector<double> dxhat(seg);
    for (std::size_t r = 0; r < g.rows; ++r) {
      for (std::size_t gi = 0; gi < groups; ++gi) {
        double sum = 0.0;
        double sum_xh = 0.0;
        for (std::size_t k = 0; k < seg; ++k) {
          const std::size_t c = gi * seg + k;
          dxhat[k] = g(r, c) * gm.data[c];
          sum += dxhat[k];
          sum_xh += dxhat[k] * cache.xhat(r, c);
        }
        const double inv = cache.invstd[r * groups + gi];
        const double n = static_cast<double>(seg);
        for (std::size_t k = 0; k < seg; ++k) {
          const std::size_t c = gi * seg + k;
          gx(r, c) += inv / n * (n * dxhat[k] - sum - cache.xhat(r, c) * sum_xh);
        }
      }
    }
  });
}

}  // namespace

Var linear(Var x, Var w, Var b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  const Matrix& xv = val(x);
  const Matrix& wv = val(w);
  const Matrix& bv = val(b);
  require(xv.cols == wv.rows, "linear: input width mismatch");
  require(bv.rows == 1 && bv.cols == wv.cols, "linear: bias shape");
  Matrix out(xv.rows, wv.cols);
  for (std::size_t r = 0; r < out.rows; ++r) std::copy(bv.data.begin(), bv.data.end(), out.row(r).begin());
  gemm_nn_acc(xv, wv, out);
  const bool need = rg(x) || rg(w) || rg(b);
  return x.tape->record(std::move(out), need, [x, w, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) gemm_nt_acc(g, t.value(w), t.grad(x));
    if (t.requires_grad(w)) gemm_tn_acc(t.value(x), g, t.grad(w));
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad(b);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
      }
    }
  });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).cols == val(b).rows, "matmul: shape mismatch");
  Matrix out = nn::matmul(val(a), val(b));
  return a.tape->record(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) gemm_nt_acc(g, t.value(b), t.grad(a));
    if (t.requires_grad(b)) gemm_tn_acc(t.value(a), g, t.grad(b));
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).cols == val(b).cols, "matmul_nt: shape mismatch");
  Matrix out(val(a).rows, val(b).rows);
  gemm_nt_acc(val(a), val(b), out);
  return a.tape->record(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) gemm_nn_acc(g, t.value(b), t.grad(a));
    if (t.requires_grad(b)) gemm_tn_acc(g, t.value(a), t.grad(b));
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).same_shape(val(b)), "add: shape mismatch");
  Matrix out = val(a);
  add_inplace(out, val(b));
  return a.tape->record(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) add_inplace(t.grad(a), g);
    if (t.requires_grad(b)) add_inplace(t.grad(b), g);
  });
}

Var scale(Var a, double s) {
  Matrix out = val(a);
  for (double& v : out.data) v *= s;
  return a.tape->record(std::move(out), rg(a), [a, s](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

Var relu(Var a) {
  Matrix out = val(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->record(std::move(out), rg(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{&t, self});
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (y.data[i] > 0.0) ga.data[i] += g.data[i];
    }
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = val(a);
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  return a.tape->record(std::move(out), rg(a), [a, slope](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += x.data[i] > 0.0 ? g.data[i] : slope * g.data[i];
  });
}

Var tanh(Var a) {
  Matrix out = val(a);
  for (double& v : out.data) v = std::tanh(v);
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->record(std::move(out), rg(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{&t, self});
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var softmax_rows(Var a, const Mask* col_mask) {
  const Matrix& x = val(a);
  if (col_mask) require(col_mask->size() == x.cols, "softmax_rows: mask length mismatch");
  const auto valid = [col_mask](std::size_t c) { return !col_mask || (*col_mask)[c] != 0; };
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols; ++c) {
      if (valid(c)) mx = std::max(mx, x(r, c));
    }
    require(std::isfinite(mx), "softmax_rows: no valid column");
    double sum = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) {
      if (!valid(c)) continue;
      out(r, c) = std::exp(x(r, c) - mx);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) /= sum;
  }
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->record(std::move(out), rg(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{&t, self});
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) { return affine_norm(x, 1, gamma, beta, eps); }

Var group_norm(Var x, std::size_t groups, Var gamma, Var beta, double eps) {
  return affine_norm(x, groups, gamma, beta, eps);
}

Var conv1d_same(Var x, Var w, Var b, std::size_t kernel, const Mask& mask) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  const Matrix& xv = val(x);
  const Matrix& wv = val(w);
  const std::size_t cin = xv.cols;
  const std::size_t cout = wv.cols;
  require(kernel % 2 == 1, "conv1d_same: kernel must be odd");
  require(wv.rows == kernel * cin, "conv1d_same: weight shape");
  require(val(b).rows == 1 && val(b).cols == cout, "conv1d_same: bias shape");
  require(mask.size() == xv.rows, "conv1d_same: mask length mismatch");
  const auto n = static_cast<std::ptrdiff_t>(xv.rows);
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);

  Matrix out(xv.rows, cout);
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    double* y = out.data.data() + static_cast<std::size_t>(j) * cout;
    const Matrix& bv = val(b);
    std::copy(bv.data.begin(), bv.data.end(), y);
    for (std::size_t tap = 0; tap < kernel; ++tap) {
      const std::ptrdiff_t src = j + static_cast<std::ptrdiff_t>(tap) - half;
      if (src < 0 || src >= n || !mask[static_cast<std::size_t>(src)]) continue;
      const double* xs = xv.data.data() + static_cast<std::size_t>(src) * cin;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double a = xs[ci];
        if (a == 0.0) continue;
        const double* wr = wv.data.data() + (tap * cin + ci) * cout;
        for (std::size_t co = 0; co < cout; ++co) y[co] += a * wr[co];
      }
    }
  }
  const bool need = rg(x) || rg(w) || rg(b);
  return x.tape->record(std::move(out), need, [x, w, b, kernel, mask, n, half, cin, cout](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(x);
    const Matrix& wv = t.value(w);
    Matrix* gx = t.requires_grad(x) ? &t.grad(x) : nullptr;
    Matrix* gw = t.requires_grad(w) ? &t.grad(w) : nullptr;
    Matrix* gb = t.requires_grad(b) ? &t.grad(b) : nullptr;
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      if (!mask[static_cast<std::size_t>(j)]) continue;
      const double* gy = g.data.data() + static_cast<std::size_t>(j) * cout;
      if (gb) {
        for (std::size_t co = 0; co < cout; ++co) gb->data[co] += gy[co];
      }
      for (std::size_t tap = 0; tap < kernel; ++tap) {
        const std::ptrdiff_t src = j + static_cast<std::ptrdiff_t>(tap) - half;
        if (src < 0 || src >= n || !mask[static_cast<std::size_t>(src)]) continue;
        const double* xs = xv.data.data() + static_cast<std::size_t>(src) * cin;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const std::size_t wrow = (tap * cin + ci) * cout;
          if (gw) {
            const double a = xs[ci];
            double* gwr = gw->data.data() + wrow;
            for (std::size_t co = 0; co < cout; ++co) gwr[co] += a * gy[co];
          }
          if (gx) {
            const double* wr = wv.data.data() + wrow;
            double s = 0.0;
            for (std::size_t co = 0; co < cout; ++co) s += wr[co] * gy[co];
            (*gx)(static_cast<std::size_t>(src), ci) += s;
          }
        }
      }
    }
  });
}

namespace {

// Attention probabilities for all heads: heads x nq x nk, zero on masked keys.
std::vector<Matrix> attention_probs(const Matrix& q, const Matrix& k, std::size_t heads, const Mask& key_mask) {
  const std::size_t dh = q.cols / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> probs(heads, Matrix(q.rows, k.rows));
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix& p = probs[h];
    for (std::size_t i = 0; i < q.rows; ++i) {
      const double* qi = q.data.data() + i * q.cols + h * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k.rows; ++j) {
        if (!key_mask[j]) continue;
        const double* kj = k.data.data() + j * k.cols + h * dh;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        p(i, j) = s * sc;
        mx = std::max(mx, p(i, j));
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < k.rows; ++j) {
        if (!key_mask[j]) continue;
        p(i, j) = std::exp(p(i, j) - mx);
        sum += p(i, j);
      }
      for (std::size_t j = 0; j < k.rows; ++j) {
        if (key_mask[j]) p(i, j) /= sum;
      }
    }
  }
  return probs;
}

void check_attention_shapes(const Matrix& q, const Matrix& k, std::size_t heads, const Mask& key_mask) {
  require(heads > 0 && q.cols % heads == 0, "attention: width not divisible by heads");
  require(q.cols == k.cols, "attention: q/k width mismatch");
  require(key_mask.size() == k.rows, "attention: key mask length mismatch");
  if (count_valid(key_mask) == 0) throw std::invalid_argument("attention: every key position is masked");
}

}  // namespace

Matrix attention_weights(const Matrix& q, const Matrix& k, std::size_t heads, std::size_t head,
                         const Mask& key_mask) {
  check_attention_shapes(q, k, heads, key_mask);
  return attention_probs(q, k, heads, key_mask).at(head);
}

Var attention(Var q, Var k, Var v, std::size_t heads, const Mask& key_mask) {
  check_same_tape(q, k);
  check_same_tape(q, v);
  const Matrix& qv = val(q);
  const Matrix& kv = val(k);
  const Matrix& vv = val(v);
  check_attention_shapes(qv, kv, heads, key_mask);
  require(vv.rows == kv.rows && vv.cols == qv.cols, "attention: value shape");
  const std::size_t dh = qv.cols / heads;
  std::vector<Matrix> probs = attention_probs(qv, kv, heads, key_mask);

  Matrix out(qv.rows, vv.cols);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < qv.rows; ++i) {
      double* oi = out.data.data() + i * out.cols + h * dh;
      for (std::size_t j = 0; j < kv.rows; ++j) {
        if (!key_mask[j]) continue;
        const double a = probs[h](i, j);
        const double* vj = vv.data.data() + j * vv.cols + h * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += a * vj[c];
      }
    }
  }
  const bool need = rg(q) || rg(k) || rg(v);
  return q.tape->record(std::move(out), need,
                        [q, k, v, heads, key_mask, dh, probs = std::move(probs)](Tape& t, const Matrix& g) {
    const Matrix& qv = t.value(q);
    const Matrix& kv = t.value(k);
    const Matrix& vv = t.value(v);
    Matrix* gq = t.requires_grad(q) ? &t.grad(q) : nullptr;
    Matrix* gk = t.requires_grad(k) ? &t.grad(k) : nullptr;
    Matrix* gv = t.requires_grad(v) ? &t.grad(v) : nullptr;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> da(kv.rows);
    for (std::size_t h = 0; h < heads; ++h) {
      const Matrix& p = probs[h];
      for (std::size_t i = 0; i < qv.rows; ++i) {
        const double* gi = g.data.data() + i * g.cols + h * dh;
        double dot = 0.0;
        for (std::size_t j = 0; j < kv.rows; ++j) {
          if (!key_mask[j]) continue;
          const double* vj = vv.data.data() + j * vv.cols + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
          da[j] = s;
          dot += p(i, j) * s;
          if (gv) {
            double* gvj = gv->data.data() + j * gv->cols + h * dh;
            const double a = p(i, j);
            for (std::size_t c = 0; c < dh; ++c) gvj[c] += a * gi[c];
          }
        }
        const double* qi = qv.data.data() + i * qv.cols + h * dh;
        for (std::size_t j = 0; j < kv.rows; ++j) {
          if (!key_mask[j]) continue;
          const double ds = p(i, j) * (da[j] - dot) * sc;
          if (ds == 0.0) continue;
          const double* kj = kv.data.data() + j * kv.cols + h * dh;
          if (gq) {
            double* gqi = gq->data.data() + i * gq->cols + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
          }
          if (gk) {
            double* gkj = gk->data.data() + j * gk->cols + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
          }
        }
      }
    }
  });
}

Var concat_rows(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = val(a);
  const Matrix& bv = val(b);
  require(av.cols == bv.cols, "concat_rows: width mismatch");
  Matrix out(av.rows + bv.rows, av.cols);
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(av.size()));
  const std::size_t split = av.size();
  return a.tape->record(std::move(out), rg(a) || rg(b), [a, b, split](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad(a);
      for (std::size_t i = 0; i < split; ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[split + i];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = val(x);
  require(begin + count <= xv.rows, "slice_rows: out of range");
  Matrix out(count, xv.cols);
  std::copy(xv.data.begin() + static_cast<std::ptrdiff_t>(begin * xv.cols),
            xv.data.begin() + static_cast<std::ptrdiff_t>((begin + count) * xv.cols), out.data.begin());
  return x.tape->record(std::move(out), rg(x), [x, begin](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad(x);
    const std::size_t off = begin * gx.cols;
    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[off + i] += g.data[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = val(parts[0]).rows;
  std::size_t cols = 0;
  bool need = false;
  for (Var p : parts) {
    check_same_tape(parts[0], p);
    require(val(p).rows == rows, "concat_cols: row mismatch");
    cols += val(p).cols;
    need = need || rg(p);
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& pv = val(p);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pv.cols; ++c) out(r, off + c) = pv(r, c);
    }
    off += pv.cols;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), need, [inputs](Tape& t, const Matrix& g) {
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t pc = t.value(p).cols;
      if (t.requires_grad(p)) {
        Matrix& gp = t.grad(p);
        for (std::size_t r = 0; r < g.rows; ++r) {
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, off + c);
        }
      }
      off += pc;
    }
  });
}

Var select_col(Var x, std::size_t c) {
  const Matrix& xv = val(x);
  require(c < xv.cols, "select_col: out of range");
  Matrix out(xv.rows, 1);
  for (std::size_t r = 0; r < xv.rows; ++r) out(r, 0) = xv(r, c);
  return x.tape->record(std::move(out), rg(x), [x, c](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad(x);
    for (std::size_t r = 0; r < g.rows; ++r) gx(r, c) += g(r, 0);
  });
}

Var scale_rows(Var x, Var s) {
  check_same_tape(x, s);
  const Matrix& xv = val(x);
  const Matrix& sv = val(s);
  require(sv.rows == xv.rows && sv.cols == 1, "scale_rows: scale shape");
  Matrix out(xv.rows, xv.cols);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    for (std::size_t c = 0; c < xv.cols; ++c) out(r, c) = sv(r, 0) * xv(r, c);
  }
  return x.tape->record(std::move(out), rg(x) || rg(s), [x, s](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(x);
    const Matrix& sv = t.value(s);
    if (t.requires_grad(x)) {
      Matrix& gx = t.grad(x);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) gx(r, c) += sv(r, 0) * g(r, c);
      }
    }
    if (t.requires_grad(s)) {
      Matrix& gs = t.grad(s);
      for (std::size_t r = 0; r < g.rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < g.cols; ++c) acc += xv(r, c) * g(r, c);
        gs(r, 0) += acc;
      }
    }
  });
}

Var l2_normalize_rows(Var x) {
  const Matrix& xv = val(x);
  Matrix out(xv.rows, xv.cols);
  std::vector<double> norms(xv.rows);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v * v;
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) continue;
    for (std::size_t c = 0; c < xv.cols; ++c) out(r, c) = xv(r, c) / norms[r];
  }
  const std::uint32_t self = static_cast<std::uint32_t>(x.tape->size());
  return x.tape->record(std::move(out), rg(x), [x, self, norms = std::move(norms)](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var{&t, self});
    Matrix& gx = t.grad(x);
    for (std::size_t r = 0; r < g.rows; ++r) {
      if (norms[r] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) gx(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
    }
  });
}

Var dot_const(Var x, const Matrix& w) {
  const Matrix& xv = val(x);
  require(xv.same_shape(w), "dot_const: shape mismatch");
  Matrix out(1, 1);
  for (std::size_t i = 0; i < w.data.size(); ++i) out.data[0] += xv.data[i] * w.data[i];
  return x.tape->record(std::move(out), rg(x), [x, w](Tape& t, const Matrix& g) {
    Matrix& gx = t.grad(x);
    for (std::size_t i = 0; i < w.data.size(); ++i) gx.data[i] += g.data[0] * w.data[i];
  });
}

}  // namespace trajsim::nn
