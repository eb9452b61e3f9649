#include "trajsim/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trajsim/error.hpp"

namespace trajsim {

NormStats compute_norm_stats(std::span<const GpsTrajectory> dataset) {
  if (dataset.empty()) throw DomainError("compute_norm_stats: empty dataset");
  NormStats s;
  s.x_min = s.y_min = std::numeric_limits<double>::infinity();
  s.x_max = s.y_max = -std::numeric_limits<double>::infinity();
  std::vector<double> gaps;
  for (const GpsTrajectory& t : dataset) {
    const std::vector<MeterXY> pts = project(t);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s.x_min = std::min(s.x_min, pts[i].x);
      s.x_max = std::max(s.x_max, pts[i].x);
      s.y_min = std::min(s.y_min, pts[i].y);
      s.y_max = std::max(s.y_max, pts[i].y);
      if (i > 0) gaps.push_back(planar_distance(pts[i - 1], pts[i]));
    }
  }
  if (!(s.x_max > s.x_min) || !(s.y_max > s.y_min)) {
    throw DomainError("compute_norm_stats: degenerate spatial extent");
  }
  if (gaps.empty()) throw DomainError("compute_norm_stats: no neighbour distances");
  // Nearest-rank percentile.
  const std::size_t rank =
      static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(gaps.size())));
  const std::size_t idx = std::max<std::size_t>(rank, 1) - 1;
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(idx), gaps.end());
  s.d_max = gaps[idx];
  if (!(s.d_max > 0.0)) throw DomainError("compute_norm_stats: zero neighbour distance scale");
  return s;
}

double bearing(MeterXY a, MeterXY b) {
  double th = std::atan2(b.x - a.x, b.y - a.y);
  if (th < 0.0) th += 2.0 * kPi;
  if (th >= 2.0 * kPi) th = 0.0;
  return th;
}

PointFeatureSeq extract_point_features(const GpsTrajectory& t, const NormStats& norm) {
  const std::size_t n = t.points.size();
  if (n < 2) throw DomainError("extract_point_features: need at least 2 points");
  const std::vector<MeterXY> pts = project(t);

  const auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  std::vector<double> dist(n - 1);
  std::vector<double> dir(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    dist[i] = unit(planar_distance(pts[i], pts[i + 1]) / norm.d_max);
    dir[i] = bearing(pts[i], pts[i + 1]) / (2.0 * kPi);
  }

  PointFeatureSeq out;
  out.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t prev = i == 0 ? 0 : i - 1;
    const std::size_t next = i + 1 == n ? n - 2 : i;
    out.rows[i] = {unit((pts[i].x - norm.x_min) / (norm.x_max - norm.x_min)),
                   unit((pts[i].y - norm.y_min) / (norm.y_max - norm.y_min)),
                   dist[prev],
                   dir[prev],
                   dist[next],
                   dir[next]};
  }
  return out;
}

}  // namespace trajsim
