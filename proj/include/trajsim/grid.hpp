#ifndef TRAJSIM_GRID_HPP_
#define TRAJSIM_GRID_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "trajsim/geo.hpp"

namespace trajsim {

struct LonLatBox {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;

  bool contains(LonLat p) const {
    return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
  }
  bool empty() const { return !(max_lon > min_lon) || !(max_lat > min_lat); }
};

struct GridSpec {
  int zoom = 18;
  std::optional<LonLatBox> bbox;

  void validate() const;
  std::uint64_t tiles_per_side() const { return std::uint64_t{1} << zoom; }
  // Tile side length at the equator.
  double cell_side_m() const;
};

struct Tile {
  std::uint64_t x = 0;
  std::uint64_t y = 0;
  friend bool operator==(const Tile&, const Tile&) = default;
};

// Slippy-map tile of a point, clamped to the tile range.
Tile tile_of(LonLat p, int zoom);
std::uint64_t cell_id(Tile t, int zoom);
Tile tile_of_cell(std::uint64_t cell, int zoom);
LonLat cell_center(std::uint64_t cell, int zoom);

struct GridTrajectory {
  std::uint64_t id = 0;
  std::vector<std::uint64_t> cells;
};

// Consecutive duplicate cells are collapsed. Throws DomainError naming the
// first point index that falls outside grid.bbox.
GridTrajectory map_to_grid(const GpsTrajectory& t, const GridSpec& grid);

/// Dense index over the cells of the training split.
///
/// Cells are numbered [0, size()) in ascending raw-ID order; any other cell
/// maps to unk() == size().
class CellVocab {
 public:
  CellVocab() = default;
  explicit CellVocab(std::span<const GridTrajectory> trajectories);
  static CellVocab from_cells(std::vector<std::uint64_t> cells);

  std::size_t size() const { return cells_.size(); }
  std::uint32_t unk() const { return static_cast<std::uint32_t>(cells_.size()); }
  std::uint32_t index(std::uint64_t cell) const;
  std::uint64_t cell(std::uint32_t index) const { return cells_.at(index); }
  const std::vector<std::uint64_t>& cells() const { return cells_; }
  std::vector<std::uint32_t> encode(const GridTrajectory& t) const;

 private:
  std::vector<std::uint64_t> cells_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

}  // namespace trajsim

#endif  // TRAJSIM_GRID_HPP_
