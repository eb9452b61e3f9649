#ifndef TRAJSIM_GEO_HPP_
#define TRAJSIM_GEO_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace trajsim {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEarthRadiusM = 6378137.0;
// atan(sinh(pi)) in degrees: the latitude where the Web-Mercator square ends.
inline constexpr double kMaxMercatorLat = 85.0511287798066;

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
  friend bool operator==(const LonLat&, const LonLat&) = default;
};

struct MeterXY {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const MeterXY&, const MeterXY&) = default;
};

bool is_valid(LonLat p);

// Spherical Web-Mercator. Throws DomainError for points outside the valid range.
MeterXY mercator_project(LonLat p);
LonLat mercator_unproject(MeterXY m);

double planar_distance(MeterXY a, MeterXY b);
// Great-circle distance on the sphere of radius kEarthRadiusM.
double haversine_distance(LonLat a, LonLat b);

struct GpsTrajectory {
  std::uint64_t id = 0;
  std::vector<LonLat> points;
};

std::vector<MeterXY> project(const GpsTrajectory& t);

struct CleanConfig {
  double dedup_dist_m = 5.0;
  double outlier_factor = 5.0;
  std::size_t min_len = 10;
  std::size_t max_len = 300;

  void validate() const;
};

/// Removes near-duplicate consecutive points and isolated teleports.
///
/// Returns std::nullopt when the cleaned length falls outside
/// [min_len, max_len]; the caller drops the trajectory from the dataset.
std::optional<GpsTrajectory> clean_trajectory(std::uint64_t id,
                                              std::span<const LonLat> raw,
                                              const CleanConfig& cfg);

}  // namespace trajsim

#endif  // TRAJSIM_GEO_HPP_
