#ifndef TRAJSIM_REGION_HPP_
#define TRAJSIM_REGION_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trajsim/grid.hpp"
#include "trajsim/nn/matrix.hpp"

namespace trajsim {

/// Cell-to-cell moves observed in the training split.
///
/// `out` keeps the observed directed edges. `walk` adds the reverse of every
/// edge so that random walks do not starve at sink cells.
struct TransitionGraph {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::vector<std::uint32_t>> walk;

  std::size_t num_edges() const;
  bool has_edge(std::uint32_t from, std::uint32_t to) const;
  bool walk_adjacent(std::uint32_t from, std::uint32_t to) const;
};

// Sequences hold dense cell indices (see CellVocab); every index must be < num_nodes.
TransitionGraph build_transition_graph(std::span<const std::vector<std::uint32_t>> sequences,
                                       std::size_t num_nodes);

struct Node2VecConfig {
  std::size_t walks_per_node = 10;
  std::size_t walk_length = 40;
  std::size_t window = 5;
  std::size_t negatives = 5;
  double p = 1.0;
  double q = 1.0;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;

  void validate() const;
};

using WalkCorpus = std::vector<std::vector<std::uint32_t>>;

// Second-order biased walks, round-major: walk r of node v sits at r * num_nodes + v.
WalkCorpus random_walks(const TransitionGraph& g, const Node2VecConfig& cfg);

enum class TableRole : std::uint8_t { kStructural, kVisual };

// num_cells rows plus a trailing all-zero UNK row.
struct EmbeddingTable {
  TableRole role = TableRole::kStructural;
  nn::Matrix rows;

  std::size_t num_cells() const { return rows.rows == 0 ? 0 : rows.rows - 1; }
  std::size_t dim() const { return rows.cols; }
  std::span<const double> row(std::uint32_t index) const;
};

EmbeddingTable zero_table(TableRole role, std::size_t num_cells, std::size_t d);

// word2vec-style initialization: uniform in [-0.5/d, 0.5/d].
EmbeddingTable skipgram_init(std::size_t num_cells, std::size_t d, std::uint64_t seed);

struct SkipGramResult {
  EmbeddingTable table;
  std::vector<double> epoch_loss;  // mean negative-sampling loss per epoch
  std::vector<double> trace;       // mean loss over consecutive tenths of epoch 1
};

/// Skip-gram with negative sampling over a walk corpus (single-threaded, so
/// the result is a pure function of the inputs).
SkipGramResult train_skipgram(const WalkCorpus& corpus, std::size_t num_cells, std::size_t d,
                              const Node2VecConfig& cfg);

// Pseudo-random unit vector per raw cell, smooth across neighbouring tiles.
std::vector<double> synth_visual_row(std::uint64_t cell, int zoom, std::size_t d, std::uint64_t seed);

EmbeddingTable synth_visual_table(const CellVocab& vocab, int zoom, std::size_t d, std::uint64_t seed);

// Raw per-cell vectors as stored in a visual-feature file.
struct VisualFeatures {
  std::size_t d = 0;
  std::vector<std::uint64_t> cells;
  std::vector<std::vector<float>> vectors;
};

// Cells absent from `features` (or from the vocabulary) resolve to UNK.
EmbeddingTable visual_table_from_features(const VisualFeatures& features, const CellVocab& vocab,
                                          std::size_t d);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace trajsim

#endif  // TRAJSIM_REGION_HPP_
