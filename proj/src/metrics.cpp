#include "trajsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "trajsim/error.hpp"

namespace trajsim {

namespace {

void check_pair(const RankLists& predicted, const RankLists& truth) {
  if (predicted.lists.size() != truth.lists.size()) {
    throw DomainError("metrics: predicted has " + std::to_string(predicted.lists.size()) + " queries, truth has " +
                      std::to_string(truth.lists.size()));
  }
  if (truth.lists.empty()) throw DomainError("metrics: no queries");
}

void check_len(const std::vector<std::uint32_t>& list, std::size_t k, const char* which) {
  if (list.size() < k) {
    throw DomainError(std::string("metrics: K=") + std::to_string(k) + " exceeds " + which + " list length " +
                      std::to_string(list.size()));
  }
}

std::size_t overlap(const std::vector<std::uint32_t>& a, std::size_t ka, const std::vector<std::uint32_t>& b,
                    std::size_t kb) {
  std::unordered_set<std::uint32_t> s(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(kb));
  std::size_t n = 0;
  for (std::size_t j = 0; j < ka; ++j) n += s.contains(a[j]);
  return n;
}

}  // namespace

double metric_rmk(const RankLists& predicted, const RankLists& truth, std::size_t m, std::size_t k) {
  check_pair(predicted, truth);
  if (m == 0 || k == 0) throw DomainError("metrics: m and K must be positive");
  if (m > k) throw DomainError("metrics: m=" + std::to_string(m) + " exceeds K=" + std::to_string(k));
  double total = 0.0;
  for (std::size_t i = 0; i < truth.lists.size(); ++i) {
    check_len(predicted.lists[i], k, "predicted");
    check_len(truth.lists[i], m, "truth");
    total += static_cast<double>(overlap(predicted.lists[i], k, truth.lists[i], m));
  }
  return total / (static_cast<double>(truth.lists.size()) * static_cast<double>(m));
}

double metric_hr(const RankLists& predicted, const RankLists& truth, std::size_t k) {
  return metric_rmk(predicted, truth, k, k);
}

double metric_mrr(const RankLists& predicted, const RankLists& truth) {
  check_pair(predicted, truth);
  double total = 0.0;
  for (std::size_t i = 0; i < truth.lists.size(); ++i) {
    check_len(truth.lists[i], 1, "truth");
    const auto& p = predicted.lists[i];
    const auto it = std::find(p.begin(), p.end(), truth.lists[i][0]);
    const std::size_t rank = it == p.end() ? std::max<std::size_t>(p.size(), 1) : static_cast<std::size_t>(it - p.begin()) + 1;
    total += 1.0 / static_cast<double>(rank);
  }
  return total / static_cast<double>(truth.lists.size());
}

double metric_ndcg(const RankLists& predicted, const RankLists& truth, std::size_t k) {
  check_pair(predicted, truth);
  if (k == 0) throw DomainError("metrics: NDCG needs K > 0");
  double ideal = 0.0;
  for (std::size_t j = 1; j <= k; ++j) ideal += 1.0 / std::log2(static_cast<double>(j + 1));
  double total = 0.0;
  for (std::size_t i = 0; i < truth.lists.size(); ++i) {
    check_len(predicted.lists[i], k, "predicted");
    check_len(truth.lists[i], k, "truth");
    std::unordered_set<std::uint32_t> rel(truth.lists[i].begin(), truth.lists[i].begin() + static_cast<std::ptrdiff_t>(k));
    double dcg = 0.0;
    for (std::size_t j = 1; j <= k; ++j) {
      if (rel.contains(predicted.lists[i][j - 1])) dcg += 1.0 / std::log2(static_cast<double>(j + 1));
    }
    total += dcg / ideal;
  }
  return total / static_cast<double>(truth.lists.size());
}

std::size_t MetricsSpec::max_k() const {
  std::size_t k = 1;
  for (std::size_t v : hr) k = std::max(k, v);
  for (const auto& [m, kk] : rmk) k = std::max(k, kk);
  for (std::size_t v : ndcg) k = std::max(k, v);
  return k;
}

RankLists rank_by_cosine(const nn::Matrix& queries, const nn::Matrix& candidates,
                         const std::vector<std::optional<std::uint32_t>>& exclude) {
  if (queries.cols != candidates.cols) {
    throw DomainError("evaluate: query dimension " + std::to_string(queries.cols) + " != candidate dimension " +
                      std::to_string(candidates.cols));
  }
  if (!exclude.empty() && exclude.size() != queries.rows) throw DomainError("evaluate: exclude list length mismatch");
  const std::size_t nc = candidates.rows;
  std::vector<double> cnorm(nc);
  for (std::size_t j = 0; j < nc; ++j) {
    double s = 0.0;
    for (double v : candidates.row(j)) s += v * v;
    cnorm[j] = std::sqrt(s);
  }
  RankLists out;
  out.lists.resize(queries.rows);
  const auto nq = static_cast<std::ptrdiff_t>(queries.rows);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t qi = 0; qi < nq; ++qi) {
    const auto i = static_cast<std::size_t>(qi);
    const auto q = queries.row(i);
    double qn = 0.0;
    for (double v : q) qn += v * v;
    qn = std::sqrt(qn);
    std::vector<double> sim(nc);
    for (std::size_t j = 0; j < nc; ++j) {
      double s = 0.0;
      const auto c = candidates.row(j);
      for (std::size_t t = 0; t < c.size(); ++t) s += q[t] * c[t];
      const double denom = qn * cnorm[j];
      sim[j] = denom > 0.0 ? s / denom : 0.0;
    }
    std::vector<std::uint32_t> order;
    order.reserve(nc);
    for (std::size_t j = 0; j < nc; ++j) {
      if (!exclude.empty() && exclude[i] && *exclude[i] == j) continue;
      order.push_back(static_cast<std::uint32_t>(j));
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (sim[a] != sim[b]) return sim[a] > sim[b];
      return a < b;
    });
    out.lists[i] = std::move(order);
  }
  out.k = out.lists.empty() ? 0 : out.lists[0].size();
  return out;
}

MetricsReport evaluate_rankings(const RankLists& predicted, const RankLists& truth, const MetricsSpec& spec) {
  MetricsReport r;
  for (std::size_t k : spec.hr) r.hr[k] = metric_hr(predicted, truth, k);
  for (const auto& [m, k] : spec.rmk) r.rmk[{m, k}] = metric_rmk(predicted, truth, m, k);
  r.mrr = metric_mrr(predicted, truth);
  for (std::size_t k : spec.ndcg) r.ndcg[k] = metric_ndcg(predicted, truth, k);
  return r;
}

MetricsReport evaluate(const nn::Matrix& queries, const nn::Matrix& candidates, const RankLists& truth,
                       const MetricsSpec& spec, const std::vector<std::optional<std::uint32_t>>& exclude) {
  return evaluate_rankings(rank_by_cosine(queries, candidates, exclude), truth, spec);
}

std::string format_metrics_text(const MetricsReport& r) {
  std::string out;
  char buf[64];
  const auto line = [&](const std::string& key, double v) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    out += key + "=" + buf + "\n";
  };
  for (const auto& [k, v] : r.hr) line("HR@" + std::to_string(k), v);
  for (const auto& [mk, v] : r.rmk) line("R" + std::to_string(mk.first) + "@" + std::to_string(mk.second), v);
  line("MRR", r.mrr);
  for (const auto& [k, v] : r.ndcg) line("NDCG@" + std::to_string(k), v);
  return out;
}

std::string format_metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : r.hr) j["HR@" + std::to_string(k)] = v;
  for (const auto& [mk, v] : r.rmk) j["R" + std::to_string(mk.first) + "@" + std::to_string(mk.second)] = v;
  j["MRR"] = r.mrr;
  for (const auto& [k, v] : r.ndcg) j["NDCG@" + std::to_string(k)] = v;
  return j.dump(2) + "\n";
}

}  // namespace trajsim
