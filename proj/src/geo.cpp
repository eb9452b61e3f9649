#include "trajsim/geo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trajsim/error.hpp"

namespace trajsim {

namespace {

constexpr double kDegToRad = kPi / 180.0;

std::vector<LonLat> dedup(std::span<const LonLat> pts, double threshold) {
  std::vector<LonLat> out;
  out.reserve(pts.size());
  for (const LonLat& p : pts) {
    if (!out.empty() && haversine_distance(out.back(), p) < threshold) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<LonLat> drop_outliers(const std::vector<LonLat>& pts, double factor) {
  if (pts.size() < 3) return pts;
  std::vector<double> gaps(pts.size() - 1);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    gaps[i] = haversine_distance(pts[i], pts[i + 1]);
  }
  std::vector<double> sorted = gaps;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  double median = *mid;
  if (sorted.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(sorted.begin(), mid));
  }
  const double limit = factor * median;

  std::vector<LonLat> out;
  out.reserve(pts.size());
  out.push_back(pts.front());
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    if (gaps[i - 1] > limit && gaps[i] > limit) continue;
    out.push_back(pts[i]);
  }
  out.push_back(pts.back());
  return out;
}

}  // namespace

bool is_valid(LonLat p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lon >= -180.0 && p.lon < 180.0 &&
         std::abs(p.lat) < kMaxMercatorLat;
}

MeterXY mercator_project(LonLat p) {
  if (!is_valid(p)) {
    throw DomainError("mercator_project: coordinate out of range (lon=" + std::to_string(p.lon) +
                      ", lat=" + std::to_string(p.lat) + ")");
  }
  const double lat = p.lat * kDegToRad;
  return {kEarthRadiusM * p.lon * kDegToRad,
          kEarthRadiusM * std::log(std::tan(kPi / 4.0 + lat / 2.0))};
}

LonLat mercator_unproject(MeterXY m) {
  const double lon = m.x / kEarthRadiusM / kDegToRad;
  const double lat = (2.0 * std::atan(std::exp(m.y / kEarthRadiusM)) - kPi / 2.0) / kDegToRad;
  return {lon, lat};
}

double planar_distance(MeterXY a, MeterXY b) { return std::hypot(a.x - b.x, a.y - b.y); }

double haversine_distance(LonLat a, LonLat b) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s = std::sin(dlat / 2.0);
  const double t = std::sin(dlon / 2.0);
  const double h = s * s + std::cos(lat1) * std::cos(lat2) * t * t;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

std::vector<MeterXY> project(const GpsTrajectory& t) {
  std::vector<MeterXY> out;
  out.reserve(t.points.size());
  for (const LonLat& p : t.points) out.push_back(mercator_project(p));
  return out;
}

void CleanConfig::validate() const {
  if (!(dedup_dist_m > 0.0) || !(outlier_factor > 0.0) || min_len == 0 || max_len == 0) {
    throw DomainError("CleanConfig: all parameters must be positive");
  }
  if (min_len > max_len) throw DomainError("CleanConfig: min_len exceeds max_len");
}

std::optional<GpsTrajectory> clean_trajectory(std::uint64_t id, std::span<const LonLat> raw,
                                              const CleanConfig& cfg) {
  cfg.validate();
  if (raw.empty()) throw DomainError("clean_trajectory: empty trajectory " + std::to_string(id));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!is_valid(raw[i])) {
      throw DomainError("clean_trajectory: trajectory " + std::to_string(id) +
                        " has an invalid coordinate at index " + std::to_string(i));
    }
  }

  std::vector<LonLat> pts = dedup(raw, cfg.dedup_dist_m);
  pts = drop_outliers(pts, cfg.outlier_factor);
  pts = dedup(pts, cfg.dedup_dist_m);

  if (pts.size() < cfg.min_len || pts.size() > cfg.max_len) return std::nullopt;
  return GpsTrajectory{id, std::move(pts)};
}

}  // namespace trajsim
