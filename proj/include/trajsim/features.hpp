#ifndef TRAJSIM_FEATURES_HPP_
#define TRAJSIM_FEATURES_HPP_

#include <array>
#include <span>
#include <vector>

#include "trajsim/geo.hpp"

namespace trajsim {

// Normalization constants, computed on the training split only.
struct NormStats {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  double d_max = 1.0;  // 99th percentile of neighbour distances
};

NormStats compute_norm_stats(std::span<const GpsTrajectory> dataset);

inline constexpr std::size_t kPointFeatureDim = 6;

// Row layout: x, y, d_prev, theta_prev, d_next, theta_next; every entry in [0, 1].
struct PointFeatureSeq {
  std::vector<std::array<double, kPointFeatureDim>> rows;
  std::size_t size() const { return rows.size(); }
};

// Bearing of b seen from a, clockwise from north, in [0, 2*pi).
double bearing(MeterXY a, MeterXY b);

/// Per-point distance/bearing features on the Mercator plane.
///
/// The first row reuses its (d_next, theta_next) as the missing predecessor
/// pair and the last row reuses its (d_prev, theta_prev).
PointFeatureSeq extract_point_features(const GpsTrajectory& t, const NormStats& norm);

}  // namespace trajsim

#endif  // TRAJSIM_FEATURES_HPP_
