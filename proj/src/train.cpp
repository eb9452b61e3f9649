#include "trajsim/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include "trajsim/error.hpp"
#include "trajsim/metrics.hpp"
#include "trajsim/nn/tape.hpp"
#include "trajsim/synthetic.hpp"

namespace trajsim {

using nn::Matrix;

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw DomainError("train: temperature must be positive");
  if (hard_negatives == 0) throw DomainError("train: hard_negatives must be at least 1");
  if (batch_size < 2) throw DomainError("train: batch_size must be at least 2");
  if (hard_negatives + 1 >= batch_size) throw DomainError("train: hard_negatives must be < batch_size - 1");
  if (!(learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
}

std::uint32_t select_positive(const DistanceMatrix& d, std::size_t i) {
  if (d.n < 2) throw DomainError("select_positive: need at least 2 trajectories");
  if (i >= d.n) throw DomainError("select_positive: index out of range");
  std::uint32_t best = 0;
  float best_v = std::numeric_limits<float>::infinity();
  bool found = false;
  for (std::size_t j = 0; j < d.n; ++j) {
    if (j == i) continue;
    const float v = d.at(i, j);
    if (!found || v < best_v) {
      best = static_cast<std::uint32_t>(j);
      best_v = v;
      found = true;
    }
  }
  return best;
}

std::vector<std::uint32_t> mine_hard_negatives(const Matrix& embeddings, std::size_t i, std::size_t positive,
                                               std::size_t k) {
  const std::size_t n = embeddings.rows;
  if (n < k + 2) {
    throw DomainError("mine_hard_negatives: batch of " + std::to_string(n) + " cannot supply " + std::to_string(k) +
                      " negatives");
  }
  if (i >= n || positive >= n) throw DomainError("mine_hard_negatives: index out of range");
  const auto norm = [&](std::size_t r) {
    double s = 0.0;
    for (double v : embeddings.row(r)) s += v * v;
    return std::sqrt(s);
  };
  const double ni = norm(i);
  std::vector<std::pair<double, std::uint32_t>> sims;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i || j == positive) continue;
    double dot = 0.0;
    for (std::size_t c = 0; c < embeddings.cols; ++c) dot += embeddings(i, c) * embeddings(j, c);
    const double denom = ni * norm(j);
    sims.emplace_back(denom > 0.0 ? dot / denom : 0.0, static_cast<std::uint32_t>(j));
  }
  std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::uint32_t> out;
  for (std::size_t q = 0; q < k; ++q) out.push_back(sims[q].second);
  return out;
}

LossResult contrastive_loss(const Matrix& s, std::span<const ContrastiveTerm> terms, double tau, bool infonce) {
  if (s.rows != s.cols) throw DomainError("contrastive_loss: similarity matrix must be square");
  if (terms.empty()) throw DomainError("contrastive_loss: no anchors");
  if (!(tau > 0.0)) throw DomainError("contrastive_loss: temperature must be positive");
  LossResult r{0.0, Matrix(s.rows, s.cols)};
  const double inv_n = 1.0 / static_cast<double>(terms.size());
  std::vector<std::uint32_t> denom;
  std::vector<double> w;
  for (const ContrastiveTerm& t : terms) {
    if (t.negatives.empty()) throw DomainError("contrastive_loss: empty negative set");
    denom.assign(t.negatives.begin(), t.negatives.end());
    if (infonce) denom.push_back(t.positive);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::uint32_t j : denom) mx = std::max(mx, s(t.anchor, j) / tau);
    w.assign(denom.size(), 0.0);
    double sum = 0.0;
    for (std::size_t q = 0; q < denom.size(); ++q) {
      w[q] = std::exp(s(t.anchor, denom[q]) / tau - mx);
      sum += w[q];
    }
    const double lse = mx + std::log(sum);
    r.value += -(s(t.anchor, t.positive) / tau - lse) * inv_n;
    r.grad(t.anchor, t.positive) -= inv_n / tau;
    for (std::size_t q = 0; q < denom.size(); ++q) r.grad(t.anchor, denom[q]) += inv_n / tau * w[q] / sum;
  }
  return r;
}

namespace {

struct Adam {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t t = 0;

  explicit Adam(const ParamSet& ps) {
    for (std::size_t s = 0; s < ps.size(); ++s) {
      m.emplace_back(ps.value(s).rows, ps.value(s).cols);
      v.emplace_back(ps.value(s).rows, ps.value(s).cols);
    }
  }

  void step(ParamSet& ps, const std::vector<Matrix>& grads, const TrainConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t s = 0; s < ps.size(); ++s) {
      Matrix& p = ps.value(s);
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double g = grads[s].data[i];
        m[s].data[i] = cfg.beta1 * m[s].data[i] + (1.0 - cfg.beta1) * g;
        v[s].data[i] = cfg.beta2 * v[s].data[i] + (1.0 - cfg.beta2) * g * g;
        const double mh = m[s].data[i] / c1;
        const double vh = v[s].data[i] / c2;
        p.data[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
      }
    }
    ps.snap_to_float();
  }
};

struct Slot {
  std::unique_ptr<nn::Tape> tape;
  nn::Var out;
};

double validation_hr1(const Model& m, const RegionTables& tables, const TrainData& data) {
  if (!data.val_truth || data.val.size() < 2) return 0.0;
  const Matrix emb = model_forward(m, tables, data.val);
  std::vector<std::optional<std::uint32_t>> exclude(data.val.size());
  for (std::size_t i = 0; i < exclude.size(); ++i) exclude[i] = static_cast<std::uint32_t>(i);
  MetricsSpec spec{{1}, {}, {}};
  return evaluate(emb, emb, *data.val_truth, spec, exclude).hr.at(1);
}

}  // namespace

TrainResult train(const Model& init, const RegionTables& tables, const TrainData& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  init.cfg.validate();
  const std::size_t n = data.train.size();
  if (!data.train_dist || data.train_dist->n != n) {
    throw DomainError("train: distance matrix does not cover the training split");
  }
  if (n < cfg.hard_negatives + 2) throw DomainError("train: training split too small for the negative count");
  if (data.val_truth && data.val_truth->lists.size() != data.val.size()) {
    throw DomainError("train: validation truth does not match the validation split");
  }

  std::vector<std::uint32_t> positive(n);
  for (std::size_t i = 0; i < n; ++i) positive[i] = select_positive(*data.train_dist, i);

  Model model = init;
  TrainResult res{init, 0, {}, {}};
  double best_val = -1.0;
  Adam adam(model.params);
  const std::size_t d = model.cfg.d;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xE90C0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      // Batch members: anchors in shuffled order, then positives not already present.
      std::vector<std::uint32_t> members(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::vector<std::int64_t> where(n, -1);
      for (std::size_t b = 0; b < members.size(); ++b) where[members[b]] = static_cast<std::int64_t>(b);
      const std::size_t anchors = members.size();
      for (std::size_t b = 0; b < anchors; ++b) {
        const std::uint32_t p = positive[members[b]];
        if (where[p] < 0) {
          where[p] = static_cast<std::int64_t>(members.size());
          members.push_back(p);
        }
      }
      const std::size_t bsz = members.size();
      if (bsz < cfg.hard_negatives + 2) continue;

      std::vector<Slot> slots(bsz);
      Matrix emb(bsz, d);
      std::vector<std::exception_ptr> errors(bsz);
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(bsz); ++b) {
        try {
          auto& sl = slots[static_cast<std::size_t>(b)];
          sl.tape = std::make_unique<nn::Tape>();
          const BoundParams p(*sl.tape, model.params);
          sl.out = encode(p, model.cfg, tables, data.train[members[static_cast<std::size_t>(b)]]);
          const auto row = sl.tape->value(sl.out).row(0);
          std::copy(row.begin(), row.end(), emb.row(static_cast<std::size_t>(b)).begin());
        } catch (...) {
          errors[static_cast<std::size_t>(b)] = std::current_exception();
        }
      }
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }

      Matrix s(bsz, bsz);
      nn::gemm_nt_acc(emb, emb, s);
      std::vector<ContrastiveTerm> terms(anchors);
      for (std::size_t b = 0; b < anchors; ++b) {
        terms[b].anchor = static_cast<std::uint32_t>(b);
        terms[b].positive = static_cast<std::uint32_t>(where[positive[members[b]]]);
        terms[b].negatives = mine_hard_negatives(emb, b, terms[b].positive, cfg.hard_negatives);
      }
      const LossResult loss = contrastive_loss(s, terms, cfg.temperature, cfg.infonce);
      if (!std::isfinite(loss.value)) throw DomainError("train: non-finite loss at step " + std::to_string(step));

      // dL/dU = (G + G^T) U for S = U U^T
      Matrix gsym(bsz, bsz);
      for (std::size_t a = 0; a < bsz; ++a) {
        for (std::size_t b = 0; b < bsz; ++b) gsym(a, b) = loss.grad(a, b) + loss.grad(b, a);
      }
      Matrix gemb(bsz, d);
      nn::gemm_nn_acc(gsym, emb, gemb);

      std::vector<Matrix> grads;
      for (std::size_t sl = 0; sl < model.params.size(); ++sl) {
        grads.emplace_back(model.params.value(sl).rows, model.params.value(sl).cols);
      }
      const auto chunk = static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
      for (std::size_t c0 = 0; c0 < bsz; c0 += chunk) {
        const std::size_t c1 = std::min(bsz, c0 + chunk);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t b = static_cast<std::ptrdiff_t>(c0); b < static_cast<std::ptrdiff_t>(c1); ++b) {
          auto& sl = slots[static_cast<std::size_t>(b)];
          Matrix seed(1, d);
          const auto g = gemb.row(static_cast<std::size_t>(b));
          std::copy(g.begin(), g.end(), seed.data.begin());
          sl.tape->backward(sl.out, seed);
        }
        for (std::size_t b = c0; b < c1; ++b) {
          slots[b].tape->for_each_param_grad([&](std::size_t slot, const Matrix& g) { add_inplace(grads[slot], g); });
          slots[b].tape.reset();
        }
      }
      for (const Matrix& g : grads) {
        for (double v : g.data) {
          if (!std::isfinite(v)) throw DomainError("train: non-finite gradient at step " + std::to_string(step));
        }
      }
      adam.step(model.params, grads, cfg);
      res.step_losses.push_back(loss.value);
      epoch_loss += loss.value;
      ++epoch_steps;
      ++step;
    }

    EpochLog log{epoch, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0,
                 validation_hr1(model, tables, data)};
    res.epochs.push_back(log);
    if (log.val_hr1 > best_val || !data.val_truth) {
      best_val = log.val_hr1;
      res.best = model;
      res.best_epoch = epoch;
    }
    if (on_epoch && !on_epoch(log, model)) break;
  }
  return res;
}

}  // namespace trajsim
