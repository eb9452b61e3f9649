#include "trajsim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "trajsim/error.hpp"

namespace trajsim {

namespace {

constexpr double kRegionMargin = 0.1;

struct MeterBox {
  double x0, y0, x1, y1;
};

MeterBox inner_meter_box(const LonLatBox& box) {
  const MeterXY lo = mercator_project({box.min_lon, box.min_lat});
  const MeterXY hi = mercator_project({box.max_lon, box.max_lat});
  const double mx = (hi.x - lo.x) * kRegionMargin;
  const double my = (hi.y - lo.y) * kRegionMargin;
  return {lo.x + mx, lo.y + my, hi.x - mx, hi.y - my};
}

// Arc-length parametrized polyline lookup.
struct RouteWalker {
  const std::vector<MeterXY>& pts;
  std::vector<double> cum;

  explicit RouteWalker(const std::vector<MeterXY>& route) : pts(route), cum(route.size(), 0.0) {
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + planar_distance(pts[i - 1], pts[i]);
  }
  double length() const { return cum.back(); }

  // Position and unit left-normal at arc length s.
  std::pair<MeterXY, MeterXY> at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    std::size_t seg = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cum.begin(), 1)) - 1;
    seg = std::min(seg, pts.size() - 2);
    const MeterXY a = pts[seg];
    const MeterXY b = pts[seg + 1];
    const double len = cum[seg + 1] - cum[seg];
    const double u = len > 0.0 ? (s - cum[seg]) / len : 0.0;
    const double dx = len > 0.0 ? (b.x - a.x) / len : 1.0;
    const double dy = len > 0.0 ? (b.y - a.y) / len : 0.0;
    return {{a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)}, {-dy, dx}};
  }
};

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void GeneratorConfig::validate() const {
  if (bbox.empty()) throw DomainError("GeneratorConfig: empty bounding box");
  if (!is_valid({bbox.min_lon, bbox.min_lat}) || !is_valid({bbox.max_lon, bbox.max_lat})) {
    throw DomainError("GeneratorConfig: bounding box outside the Mercator range");
  }
  if (min_len < 2 || min_len > max_len) throw DomainError("GeneratorConfig: bad length range");
  if (clusters == 0) throw DomainError("GeneratorConfig: clusters must be positive");
  if (!(step_mean_m > 0.0) || step_sd_m < 0.0 || turn_sd_rad < 0.0 || lateral_sd_m < 0.0 ||
      jitter_sd_m < 0.0) {
    throw DomainError("GeneratorConfig: invalid step or noise parameters");
  }
}

LonLatBox cluster_region(const GeneratorConfig& cfg, std::size_t cluster) {
  const std::size_t gx = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.clusters))));
  const std::size_t gy = (cfg.clusters + gx - 1) / gx;
  const double w = (cfg.bbox.max_lon - cfg.bbox.min_lon) / static_cast<double>(gx);
  const double h = (cfg.bbox.max_lat - cfg.bbox.min_lat) / static_cast<double>(gy);
  const double col = static_cast<double>(cluster % gx);
  const double row = static_cast<double>(cluster / gx);
  return {cfg.bbox.min_lon + col * w, cfg.bbox.min_lat + row * h, cfg.bbox.min_lon + (col + 1) * w,
          cfg.bbox.min_lat + (row + 1) * h};
}

std::vector<MeterXY> cluster_route(const GeneratorConfig& cfg, std::uint64_t seed,
                                   std::size_t cluster) {
  std::mt19937_64 rng(mix_seed(seed, 0xC1u + (cluster << 8)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> turn(0.0, cfg.turn_sd_rad);

  const MeterBox box = inner_meter_box(cluster_region(cfg, cluster));
  const double step = 0.5 * cfg.step_mean_m;
  const std::size_t steps =
      static_cast<std::size_t>(std::ceil(2.0 * static_cast<double>(cfg.max_len + 5))) + 1;

  MeterXY p{box.x0 + unit(rng) * (box.x1 - box.x0), box.y0 + unit(rng) * (box.y1 - box.y0)};
  double heading = unit(rng) * 2.0 * kPi;
  std::vector<MeterXY> route{p};
  route.reserve(steps + 1);
  for (std::size_t k = 0; k < steps; ++k) {
    heading += turn(rng);
    double dx = std::sin(heading) * step;
    double dy = std::cos(heading) * step;
    if (p.x + dx < box.x0 || p.x + dx > box.x1) dx = -dx;
    if (p.y + dy < box.y0 || p.y + dy > box.y1) dy = -dy;
    heading = std::atan2(dx, dy);
    p = {std::clamp(p.x + dx, box.x0, box.x1), std::clamp(p.y + dy, box.y0, box.y1)};
    route.push_back(p);
  }
  return route;
}

std::vector<GpsTrajectory> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<GpsTrajectory> out(cfg.count);
  if (cfg.count == 0) return out;

  std::vector<std::vector<MeterXY>> routes(cfg.clusters);
  for (std::size_t c = 0; c < cfg.clusters; ++c) routes[c] = cluster_route(cfg, seed, c);

  const auto count = static_cast<std::ptrdiff_t>(cfg.count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(k) + (1ULL << 40)));
    std::uniform_int_distribution<std::size_t> pick_cluster(0, cfg.clusters - 1);
    std::uniform_int_distribution<std::size_t> pick_len(cfg.min_len, cfg.max_len);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t cluster = pick_cluster(rng);
    const std::size_t n = pick_len(rng);
    const RouteWalker walker(routes[cluster]);
    const double need = static_cast<double>(n - 1) * cfg.step_mean_m;
    double s = unit(rng) * std::max(0.0, walker.length() - need);
    const double offset = gauss(rng) * cfg.lateral_sd_m;
    double drift = 0.0;

    GpsTrajectory t{cfg.first_id + static_cast<std::uint64_t>(k), {}};
    t.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) s += std::max(0.2 * cfg.step_mean_m, cfg.step_mean_m + gauss(rng) * cfg.step_sd_m);
      drift = 0.8 * drift + 0.3 * cfg.lateral_sd_m * gauss(rng);
      const auto [pos, normal] = walker.at(s);
      const double lat_off = offset + drift;
      const MeterXY m{pos.x + normal.x * lat_off + gauss(rng) * cfg.jitter_sd_m,
                      pos.y + normal.y * lat_off + gauss(rng) * cfg.jitter_sd_m};
      LonLat ll = mercator_unproject(m);
      ll.lon = std::clamp(ll.lon, cfg.bbox.min_lon, cfg.bbox.max_lon);
      ll.lat = std::clamp(ll.lat, cfg.bbox.min_lat, cfg.bbox.max_lat);
      t.points.push_back(ll);
    }
    out[static_cast<std::size_t>(k)] = std::move(t);
  }
  return out;
}

DatasetSplit split_dataset(std::size_t n, std::uint64_t seed, double train_frac, double val_frac) {
  if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0) {
    throw DomainError("split_dataset: invalid fractions");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x5B117));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  DatasetSplit s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), perm.end());
  return s;
}

}  // namespace trajsim
