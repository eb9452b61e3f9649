#ifndef TRAJSIM_SYNTHETIC_HPP_
#define TRAJSIM_SYNTHETIC_HPP_

#include <cstdint>
#include <vector>

#include "trajsim/geo.hpp"
#include "trajsim/grid.hpp"

namespace trajsim {

// Clustered correlated random walks standing in for a city taxi dataset.
struct GeneratorConfig {
  std::size_t count = 100;
  std::size_t min_len = 10;
  std::size_t max_len = 30;
  LonLatBox bbox{-8.66, 41.13, -8.56, 41.19};
  std::size_t clusters = 8;
  double step_mean_m = 120.0;  // distance between consecutive samples
  double step_sd_m = 25.0;
  double turn_sd_rad = 0.35;   // heading change per step of a centroid route
  double lateral_sd_m = 40.0;  // per-trajectory offset from its route
  double jitter_sd_m = 8.0;    // per-point GPS noise
  std::uint64_t first_id = 0;

  void validate() const;
};

// Sub-box of cfg.bbox that hosts cluster c's centroid route.
LonLatBox cluster_region(const GeneratorConfig& cfg, std::size_t cluster);

// Centroid route of cluster c, in Mercator meters.
std::vector<MeterXY> cluster_route(const GeneratorConfig& cfg, std::uint64_t seed,
                                   std::size_t cluster);

/// Deterministic for a fixed (cfg, seed). Trajectory k draws from an RNG
/// keyed by (seed, k), so generation parallelizes without changing output.
std::vector<GpsTrajectory> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded shuffle into 20% / 10% / 70% index sets.
DatasetSplit split_dataset(std::size_t n, std::uint64_t seed, double train_frac = 0.2,
                           double val_frac = 0.1);

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace trajsim

#endif  // TRAJSIM_SYNTHETIC_HPP_
