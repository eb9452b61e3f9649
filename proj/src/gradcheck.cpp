#include "trajsim/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "trajsim/error.hpp"
#include "trajsim/nn/ops.hpp"
#include "trajsim/synthetic.hpp"
#include "trajsim/train.hpp"

namespace trajsim {

using nn::Mask;
using nn::Matrix;
using nn::Tape;
using nn::Var;

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data) v = u(rng);
  return m;
}

double objective(const LeafList& leaves, const BlockBuilder& build, const Matrix& w) {
  Tape t;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < leaves.size(); ++i) vars.push_back(t.parameter(*leaves[i].second, i));
  const Var out = build(t, vars);
  return t.value(nn::dot_const(out, w)).data[0];
}

}  // namespace

GradCheckResult check_gradients(const std::string& block, const LeafList& leaves, const BlockBuilder& build,
                                const GradCheckOptions& opt) {
  GradCheckResult res{block, 0.0, 0, ""};
  std::mt19937_64 rng(mix_seed(opt.seed, 0x6C0C));

  Tape t;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < leaves.size(); ++i) vars.push_back(t.parameter(*leaves[i].second, i));
  const Var out = build(t, vars);
  const Matrix w = random_matrix(t.value(out).rows, t.value(out).cols, rng, -1.0, 1.0);
  const Var loss = nn::dot_const(out, w);
  t.backward(loss, Matrix(1, 1, 1.0));

  std::vector<Matrix> analytic(leaves.size());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (!t.has_grad(vars[i])) continue;
    analytic[i] = t.grad(vars[i]);
    for (std::size_t e = 0; e < analytic[i].size(); ++e) {
      if (!std::isfinite(analytic[i].data[e])) {
        throw DomainError("gradcheck " + block + ": non-finite gradient at " + leaves[i].first + "[" +
                          std::to_string(e) + "]");
      }
      entries.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(e));
    }
  }
  if (entries.size() > opt.max_entries) {
    for (std::size_t k = 0; k < opt.max_entries; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, entries.size() - 1);
      std::swap(entries[k], entries[pick(rng)]);
    }
    entries.resize(opt.max_entries);
  }

  for (const auto& [li, e] : entries) {
    double& v = leaves[li].second->data[e];
    const double orig = v;
    v = orig + opt.eps;
    const double up = objective(leaves, build, w);
    v = orig - opt.eps;
    const double down = objective(leaves, build, w);
    v = orig;
    const double numeric = (up - down) / (2.0 * opt.eps);
    const double err = relative_error(analytic[li].data[e], numeric);
    if (!std::isfinite(numeric)) {
      throw DomainError("gradcheck " + block + ": non-finite objective at " + leaves[li].first + "[" +
                        std::to_string(e) + "]");
    }
    ++res.checked;
    if (err > res.max_rel_err || res.worst.empty()) {
      res.max_rel_err = err;
      res.worst = leaves[li].first + "[" + std::to_string(e) + "]";
    }
  }
  return res;
}

namespace {

// Model with every parameter (biases and norm gains included) moved off its
// initial value so that no gradient path is trivially zero.
Model jittered_model(const GradCheckOptions& opt) {
  Model m = init_model(opt.model, opt.seed);
  std::mt19937_64 rng(mix_seed(opt.seed, 0x717));
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (std::size_t s = 0; s < m.params.size(); ++s) {
    for (double& v : m.params.value(s).data) v += u(rng);
  }
  return m;
}

struct Inputs {
  std::vector<std::pair<std::string, Matrix>> mats;
};

using ModelBlock = std::function<Var(const BoundParams&, const std::vector<Var>& inputs)>;

GradCheckResult check_model_block(const std::string& block, Model& m, Inputs& in, const ModelBlock& fn,
                                  const GradCheckOptions& opt) {
  LeafList leaves;
  for (std::size_t s = 0; s < m.params.size(); ++s) leaves.emplace_back(m.params.name(s), &m.params.value(s));
  for (auto& [name, mat] : in.mats) leaves.emplace_back(name, &mat);
  const std::size_t np = m.params.size();
  const ParamSet* ps = &m.params;
  return check_gradients(block, leaves,
                         [&, np, ps](Tape& t, const std::vector<Var>& vars) {
                           const BoundParams p(t, *ps, std::vector<Var>(vars.begin(), vars.begin() + np));
                           return fn(p, std::vector<Var>(vars.begin() + np, vars.end()));
                         },
                         opt);
}

Mask padded_mask(std::size_t n) {
  Mask m(n, 1);
  if (n > 2) m.back() = 0;
  return m;
}

struct Fixture {
  EmbeddingTable structural;
  EmbeddingTable visual;
  std::vector<std::uint32_t> cells;
};

Fixture region_fixture(const GradCheckOptions& opt, std::mt19937_64& rng) {
  const std::size_t cells = 5;
  Fixture f{zero_table(TableRole::kStructural, cells, opt.model.d), zero_table(TableRole::kVisual, cells, opt.model.d),
            {}};
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t r = 0; r < cells; ++r) {
    for (std::size_t c = 0; c < opt.model.d; ++c) {
      f.structural.rows(r, c) = u(rng);
      f.visual.rows(r, c) = u(rng);
    }
  }
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(cells));  // includes UNK
  for (std::size_t i = 0; i < opt.n1; ++i) f.cells.push_back(pick(rng));
  return f;
}

GradCheckResult loss_block(const GradCheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(opt.seed, 0x1055));
  const std::size_t batch = 6;
  Matrix u = random_matrix(batch, opt.model.d, rng, -0.2, 0.2);
  // Positives: pairs (0,1), (2,3), (4,5).
  std::vector<ContrastiveTerm> terms;
  for (std::uint32_t a = 0; a < batch; ++a) {
    const std::uint32_t pos = a ^ 1U;
    terms.push_back({a, pos, mine_hard_negatives(u, a, pos, 2)});
  }
  const double tau = 0.2;
  LeafList leaves{{"embeddings", &u}};
  return check_gradients(
      "loss", leaves,
      [terms, tau](Tape& t, const std::vector<Var>& vars) {
        const Var s = nn::matmul_nt(vars[0], vars[0]);
        LossResult r = contrastive_loss(t.value(s), terms, tau);
        Matrix value(1, 1, r.value);
        return t.record(std::move(value), true, [s, g = std::move(r.grad)](Tape& tp, const Matrix& go) {
          Matrix& gs = tp.grad(s);
          for (std::size_t i = 0; i < g.data.size(); ++i) gs.data[i] += go.data[0] * g.data[i];
        });
      },
      opt);
}

}  // namespace

std::vector<std::string> gradcheck_blocks() {
  return {"linear", "region", "locality", "correlation", "continuity", "moe", "fusion", "loss", "model"};
}

GradCheckResult grad_check(const std::string& block, const GradCheckOptions& opt) {
  opt.model.validate();
  if (opt.n1 == 0 || opt.n2 < 3) throw DomainError("gradcheck: need n1 >= 1 and n2 >= 3");
  if (!(opt.eps > 0.0)) throw DomainError("gradcheck: eps must be positive");
  if (block == "loss") return loss_block(opt);

  Model m = jittered_model(opt);
  const auto names = gradcheck_blocks();
  const auto pos = std::find(names.begin(), names.end(), block);
  if (pos == names.end()) throw DomainError("gradcheck: unknown block '" + block + "'");
  std::mt19937_64 rng(mix_seed(opt.seed, 0x6B00 + static_cast<std::uint64_t>(pos - names.begin())));
  const std::size_t d = opt.model.d;
  const ModelConfig cfg = opt.model;
  const Mask pmask = padded_mask(opt.n2);
  Inputs in;

  if (block == "linear") {
    in.mats.emplace_back("features", random_matrix(opt.n2, kPointFeatureDim, rng, 0.0, 1.0));
    return check_model_block(block, m, in, [](const BoundParams& p, const std::vector<Var>& x) {
      return point_project(p, x[0]);
    }, opt);
  }
  if (block == "region") {
    const Fixture f = region_fixture(opt, rng);
    const Mask rmask = padded_mask(opt.n1);
    return check_model_block(block, m, in, [&](const BoundParams& p, const std::vector<Var>&) {
      return region_encode(p, cfg, {&f.structural, &f.visual}, f.cells, rmask);
    }, opt);
  }
  if (block == "locality" || block == "correlation" || block == "continuity") {
    in.mats.emplace_back("ep", random_matrix(opt.n2, d, rng, -0.5, 0.5));
    return check_model_block(block, m, in, [&](const BoundParams& p, const std::vector<Var>& x) {
      if (block == "locality") return expert_locality(p, cfg, x[0], pmask);
      if (block == "correlation") return expert_correlation(p, x[0], pmask);
      return expert_continuity(p, cfg, x[0], pmask);
    }, opt);
  }
  if (block == "moe") {
    for (const char* name : {"loc", "cor", "con"}) in.mats.emplace_back(name, random_matrix(opt.n2, d, rng, -1.0, 1.0));
    return check_model_block(block, m, in, [](const BoundParams& p, const std::vector<Var>& x) {
      return moe_fuse(p, x[0], x[1], x[2]);
    }, opt);
  }
  if (block == "fusion") {
    in.mats.emplace_back("hr", random_matrix(opt.n1 + 1, d, rng, -1.0, 1.0));
    in.mats.emplace_back("hp", random_matrix(opt.n2, d, rng, -1.0, 1.0));
    const Mask rmask = padded_mask(opt.n1);
    return check_model_block(block, m, in, [&](const BoundParams& p, const std::vector<Var>& x) {
      return fuse_and_embed(p, cfg, x[0], rmask, x[1], pmask);
    }, opt);
  }
  if (block == "model") {
    const Fixture f = region_fixture(opt, rng);
    EncoderInput enc;
    enc.cells = f.cells;
    enc.region_mask = padded_mask(opt.n1);
    enc.points = random_matrix(opt.n2, kPointFeatureDim, rng, 0.0, 1.0);
    enc.point_mask = pmask;
    return check_model_block(block, m, in, [&](const BoundParams& p, const std::vector<Var>&) {
      return encode(p, cfg, {&f.structural, &f.visual}, enc);
    }, opt);
  }
  throw DomainError("gradcheck: unknown block '" + block + "'");
}

}  // namespace trajsim
