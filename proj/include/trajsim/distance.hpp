#ifndef TRAJSIM_DISTANCE_HPP_
#define TRAJSIM_DISTANCE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajsim/geo.hpp"

namespace trajsim {

using Polyline = std::vector<MeterXY>;

enum class Measure : std::uint8_t { kDtw = 1, kDfd = 2, kEdwp = 3 };

std::string_view measure_name(Measure m);
Measure parse_measure(std::string_view name);

// All kernels use planar Euclidean point distance on Mercator meters and
// accumulate in double. Each throws DomainError on empty input.

// Sum of matched point distances along the cheapest monotone warping path.
double dtw(std::span<const MeterXY> a, std::span<const MeterXY> b);

// Minimax coupling distance.
double dfd(std::span<const MeterXY> a, std::span<const MeterXY> b);

/// Edit distance with projections.
///
/// Matching segments e1, e2 costs (|e1.s - e2.s| + |e1.e - e2.e|) * (len(e1) + len(e2)).
/// An insertion splits the current head segment of one trajectory at the
/// clamped orthogonal projection of the other trajectory's next vertex and
/// matches the split-off piece against the other head segment. Requires at
/// least two points per trajectory. Exact O(n*m*(n+m)) dynamic program.
double edwp(std::span<const MeterXY> a, std::span<const MeterXY> b);

double measure_distance(Measure m, std::span<const MeterXY> a, std::span<const MeterXY> b);

// n x n ground-truth distances, stored as float (rounded to nearest from the
// double kernels). Symmetric with a zero diagonal.
struct DistanceMatrix {
  Measure measure = Measure::kDtw;
  std::size_t n = 0;
  std::vector<float> values;

  float at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * n, n}; }
};

/// OpenMP over query rows; only the upper triangle is evaluated and mirrored.
/// Output bytes do not depend on the thread count. threads == 0 keeps the
/// OpenMP default.
DistanceMatrix pairwise_matrix(std::span<const Polyline> set, Measure m, int threads = 0);

// Single-threaded reference for the parallel kernel.
DistanceMatrix pairwise_matrix_serial(std::span<const Polyline> set, Measure m);

// Per query, candidate indices by ascending distance (ties by index), self excluded.
struct RankLists {
  std::size_t k = 0;
  std::vector<std::vector<std::uint32_t>> lists;
};

RankLists ground_truth_topk(const DistanceMatrix& d, std::size_t k_max);

}  // namespace trajsim

#endif  // TRAJSIM_DISTANCE_HPP_
