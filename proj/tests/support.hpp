#ifndef TRAJSIM_TESTS_SUPPORT_HPP_
#define TRAJSIM_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "trajsim/distance.hpp"
#include "trajsim/features.hpp"
#include "trajsim/geo.hpp"
#include "trajsim/grid.hpp"
#include "trajsim/model.hpp"
#include "trajsim/region.hpp"
#include "trajsim/synthetic.hpp"

namespace trajsim::testing {

// Synthetic trajectories that survive cleaning, renumbered 0..count-1.
inline std::vector<GpsTrajectory> clean_synthetic(GeneratorConfig g, std::size_t count, std::uint64_t seed) {
  g.count = count + count / 4 + 8;
  const auto raw = generate_synthetic(g, seed);
  std::vector<GpsTrajectory> out;
  for (const GpsTrajectory& t : raw) {
    if (out.size() == count) break;
    if (auto c = clean_trajectory(out.size(), t.points, CleanConfig{})) out.push_back(std::move(*c));
  }
  return out;
}

inline std::vector<Polyline> polylines(std::span<const GpsTrajectory> trajs) {
  std::vector<Polyline> out;
  for (const GpsTrajectory& t : trajs) out.push_back(project(t));
  return out;
}

// Region tables and encoder inputs built from a fitting subset (the
// training split) and applied to every trajectory in the pool.
struct Prepared {
  CellVocab vocab;
  NormStats norm;
  EmbeddingTable structural;
  EmbeddingTable visual;
  std::vector<EncoderInput> inputs;
  RegionTables tables() const { return {&structural, &visual}; }
};

inline Prepared prepare(std::span<const GpsTrajectory> pool, std::span<const std::size_t> fit, std::size_t d,
                        std::uint64_t seed, Node2VecConfig n2v = {}) {
  const GridSpec grid{};
  std::vector<GridTrajectory> cells;
  for (const GpsTrajectory& t : pool) cells.push_back(map_to_grid(t, grid));
  std::vector<GridTrajectory> fit_cells;
  std::vector<GpsTrajectory> fit_trajs;
  for (std::size_t i : fit) {
    fit_cells.push_back(cells[i]);
    fit_trajs.push_back(pool[i]);
  }
  Prepared p;
  p.vocab = CellVocab(fit_cells);
  p.norm = compute_norm_stats(fit_trajs);
  std::vector<std::vector<std::uint32_t>> seqs;
  for (const GridTrajectory& g : fit_cells) seqs.push_back(p.vocab.encode(g));
  n2v.seed = seed;
  const TransitionGraph graph = build_transition_graph(seqs, p.vocab.size());
  p.structural = train_skipgram(random_walks(graph, n2v), p.vocab.size(), d, n2v).table;
  p.visual = synth_visual_table(p.vocab, grid.zoom, d, seed);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    p.inputs.push_back(make_input(p.vocab.encode(cells[i]), extract_point_features(pool[i], p.norm)));
  }
  return p;
}

template <typename T>
std::vector<T> pick(std::span<const T> all, std::span<const std::size_t> idx) {
  std::vector<T> out;
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace trajsim::testing

#endif  // TRAJSIM_TESTS_SUPPORT_HPP_
