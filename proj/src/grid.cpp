#include "trajsim/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trajsim/error.hpp"

namespace trajsim {

void GridSpec::validate() const {
  if (zoom < 1 || zoom > 30) throw DomainError("GridSpec: zoom must be in [1, 30]");
  if (bbox && bbox->empty()) throw DomainError("GridSpec: empty bounding box");
}

double GridSpec::cell_side_m() const {
  return 2.0 * kPi * kEarthRadiusM / static_cast<double>(tiles_per_side());
}

Tile tile_of(LonLat p, int zoom) {
  if (!is_valid(p)) throw DomainError("tile_of: coordinate out of range");
  const double n = std::ldexp(1.0, zoom);
  const double lat = p.lat * kPi / 180.0;
  const double fx = (p.lon + 180.0) / 360.0 * n;
  const double fy = (1.0 - std::log(std::tan(lat) + 1.0 / std::cos(lat)) / kPi) / 2.0 * n;
  const double hi = n - 1.0;
  return {static_cast<std::uint64_t>(std::clamp(std::floor(fx), 0.0, hi)),
          static_cast<std::uint64_t>(std::clamp(std::floor(fy), 0.0, hi))};
}

std::uint64_t cell_id(Tile t, int zoom) { return (t.y << zoom) + t.x; }

Tile tile_of_cell(std::uint64_t cell, int zoom) {
  const std::uint64_t mask = (std::uint64_t{1} << zoom) - 1;
  return {cell & mask, cell >> zoom};
}

LonLat cell_center(std::uint64_t cell, int zoom) {
  const Tile t = tile_of_cell(cell, zoom);
  const double n = std::ldexp(1.0, zoom);
  const double lon = (static_cast<double>(t.x) + 0.5) / n * 360.0 - 180.0;
  const double merc = kPi * (1.0 - 2.0 * (static_cast<double>(t.y) + 0.5) / n);
  const double lat = std::atan(std::sinh(merc)) * 180.0 / kPi;
  return {lon, lat};
}

GridTrajectory map_to_grid(const GpsTrajectory& t, const GridSpec& grid) {
  grid.validate();
  GridTrajectory out{t.id, {}};
  out.cells.reserve(t.points.size());
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    const LonLat& p = t.points[i];
    if (grid.bbox && !grid.bbox->contains(p)) {
      throw DomainError("map_to_grid: trajectory " + std::to_string(t.id) + " point " +
                        std::to_string(i) + " lies outside the grid bounding box");
    }
    const std::uint64_t c = cell_id(tile_of(p, grid.zoom), grid.zoom);
    if (out.cells.empty() || out.cells.back() != c) out.cells.push_back(c);
  }
  if (out.cells.empty()) throw DomainError("map_to_grid: empty trajectory");
  return out;
}

CellVocab::CellVocab(std::span<const GridTrajectory> trajectories) {
  std::vector<std::uint64_t> all;
  for (const GridTrajectory& t : trajectories) all.insert(all.end(), t.cells.begin(), t.cells.end());
  *this = from_cells(std::move(all));
}

CellVocab CellVocab::from_cells(std::vector<std::uint64_t> cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  CellVocab v;
  v.cells_ = std::move(cells);
  v.index_.reserve(v.cells_.size());
  for (std::size_t i = 0; i < v.cells_.size(); ++i) {
    v.index_.emplace(v.cells_[i], static_cast<std::uint32_t>(i));
  }
  return v;
}

std::uint32_t CellVocab::index(std::uint64_t cell) const {
  const auto it = index_.find(cell);
  return it == index_.end() ? unk() : it->second;
}

std::vector<std::uint32_t> CellVocab::encode(const GridTrajectory& t) const {
  std::vector<std::uint32_t> out;
  out.reserve(t.cells.size());
  for (std::uint64_t c : t.cells) out.push_back(index(c));
  return out;
}

}  // namespace trajsim
