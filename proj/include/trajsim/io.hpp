#ifndef TRAJSIM_IO_HPP_
#define TRAJSIM_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trajsim/distance.hpp"
#include "trajsim/features.hpp"
#include "trajsim/geo.hpp"
#include "trajsim/grid.hpp"
#include "trajsim/model.hpp"
#include "trajsim/region.hpp"

namespace trajsim {

namespace fs = std::filesystem;

// Whole-file helpers. Errors name the path.
std::vector<std::uint8_t> read_file(const fs::path& path);
void write_file(const fs::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// CSV with header traj_id,point_idx,lon,lat. Trajectories keep the order
/// of their first row; point_idx must increase within a trajectory.
std::vector<GpsTrajectory> load_trajectories(const fs::path& path);
std::vector<GpsTrajectory> parse_trajectories(const std::string& text);
// Coordinates use the shortest round-trip decimal form.
void save_trajectories(const fs::path& path, std::span<const GpsTrajectory> trajs);

// CSV with header traj_id,cells; cells separated by ';'.
std::vector<GridTrajectory> load_grid(const fs::path& path);
void save_grid(const fs::path& path, std::span<const GridTrajectory> trajs);

// "TDM1", u8 measure id, u32 n, n*n f32 row-major. Little-endian.
std::vector<std::uint8_t> encode_distance_matrix(const DistanceMatrix& d);
DistanceMatrix decode_distance_matrix(std::span<const std::uint8_t> bytes);
void save_distance_matrix(const fs::path& path, const DistanceMatrix& d);
DistanceMatrix load_distance_matrix(const fs::path& path);

struct EmbeddingFile {
  std::vector<std::uint64_t> ids;
  nn::Matrix values;  // float-representable
};

// "TEMB", u32 n, u32 d, n*d f32, n u64 ids.
std::vector<std::uint8_t> encode_embeddings(const EmbeddingFile& e);
EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes);
void save_embeddings(const fs::path& path, const EmbeddingFile& e);
EmbeddingFile load_embeddings(const fs::path& path, std::size_t expected_dim = 0);

/// "TCKP", u32 config length + JSON model config, u32 record count, then per
/// tensor: u32 name length, name, u32 rows, u32 cols, rows*cols f32.
std::vector<std::uint8_t> encode_checkpoint(const Model& m);
// Checks the stored config against `expected` and the tensor names and
// shapes against a freshly initialized model of that config.
Model decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig& expected);
// Trusts the embedded config.
Model decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const fs::path& path, const Model& m);
Model load_checkpoint(const fs::path& path, const ModelConfig& expected);
Model load_checkpoint(const fs::path& path);

// "TVIS", u32 count, u32 d, records (u64 cell id, d f32). Duplicate ids are rejected.
std::vector<std::uint8_t> encode_visual(const VisualFeatures& v);
VisualFeatures decode_visual(std::span<const std::uint8_t> bytes);
void save_visual(const fs::path& path, const VisualFeatures& v);
VisualFeatures load_visual(const fs::path& path);

std::string norm_stats_json(const NormStats& s);
NormStats parse_norm_stats(const std::string& json);

struct GeoResult {
  std::uint64_t id = 0;
  std::size_t rank = 0;  // 1-based
  double distance = 0.0;
};

// FeatureCollection of LineStrings ([lon, lat] order) with role/rank/distance properties.
std::string geojson_retrieval(const GpsTrajectory& query, std::span<const GpsTrajectory> trajs,
                              std::span<const GeoResult> results);

}  // namespace trajsim

#endif  // TRAJSIM_IO_HPP_
