#ifndef TRAJSIM_METRICS_HPP_
#define TRAJSIM_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trajsim/distance.hpp"
#include "trajsim/nn/matrix.hpp"

namespace trajsim {

// (1/NK) sum_i |P_i^K intersect G_i^K|
double metric_hr(const RankLists& predicted, const RankLists& truth, std::size_t k);
// (1/Nm) sum_i |P_i^K intersect G_i^m|
double metric_rmk(const RankLists& predicted, const RankLists& truth, std::size_t m, std::size_t k);
/// Mean reciprocal rank of each query's true nearest neighbour in the
/// predicted list. A neighbour missing from the list counts as rank n, the
/// predicted list length.
double metric_mrr(const RankLists& predicted, const RankLists& truth);
double metric_ndcg(const RankLists& predicted, const RankLists& truth, std::size_t k);

struct MetricsSpec {
  std::vector<std::size_t> hr{1, 5, 10, 20};
  std::vector<std::pair<std::size_t, std::size_t>> rmk{{5, 20}};  // (m, K)
  std::vector<std::size_t> ndcg{5, 10};
  std::size_t max_k() const;
};

struct MetricsReport {
  std::map<std::size_t, double> hr;
  std::map<std::pair<std::size_t, std::size_t>, double> rmk;
  double mrr = 0.0;
  std::map<std::size_t, double> ndcg;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Ranks every candidate for every query by descending cosine similarity,
/// ties by ascending candidate index. exclude[i], when set, removes that
/// candidate from query i's list (a query's own copy in the pool).
RankLists rank_by_cosine(const nn::Matrix& queries, const nn::Matrix& candidates,
                         const std::vector<std::optional<std::uint32_t>>& exclude = {});

MetricsReport evaluate(const nn::Matrix& queries, const nn::Matrix& candidates, const RankLists& truth,
                       const MetricsSpec& spec, const std::vector<std::optional<std::uint32_t>>& exclude = {});
MetricsReport evaluate_rankings(const RankLists& predicted, const RankLists& truth, const MetricsSpec& spec);

// "HR@1=0.1234" lines, 4 decimals.
std::string format_metrics_text(const MetricsReport& r);
std::string format_metrics_json(const MetricsReport& r);

}  // namespace trajsim

#endif  // TRAJSIM_METRICS_HPP_
