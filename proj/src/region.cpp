#include "trajsim/region.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "trajsim/error.hpp"
#include "trajsim/synthetic.hpp"

namespace trajsim {

namespace {

bool sorted_contains(const std::vector<std::uint32_t>& v, std::uint32_t x) {
  return std::binary_search(v.begin(), v.end(), x);
}

void sort_unique(std::vector<std::uint32_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Log-sigmoid without overflow.
double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

constexpr std::uint64_t kVisualLattice = 16;

std::vector<double> gaussian_vector(std::uint64_t key, std::size_t d) {
  std::mt19937_64 rng(key);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace

std::size_t TransitionGraph::num_edges() const {
  std::size_t e = 0;
  for (const auto& o : out) e += o.size();
  return e;
}

bool TransitionGraph::has_edge(std::uint32_t from, std::uint32_t to) const {
  return from < num_nodes && sorted_contains(out[from], to);
}

bool TransitionGraph::walk_adjacent(std::uint32_t from, std::uint32_t to) const {
  return from < num_nodes && sorted_contains(walk[from], to);
}

TransitionGraph build_transition_graph(std::span<const std::vector<std::uint32_t>> sequences,
                                       std::size_t num_nodes) {
  TransitionGraph g;
  g.num_nodes = num_nodes;
  g.out.resize(num_nodes);
  g.walk.resize(num_nodes);
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    for (std::size_t k = 0; k < seq.size(); ++k) {
      if (seq[k] >= num_nodes) {
        throw DomainError("build_transition_graph: sequence " + std::to_string(s) + " has cell index " +
                          std::to_string(seq[k]) + " >= M=" + std::to_string(num_nodes));
      }
      if (k == 0 || seq[k - 1] == seq[k]) continue;
      g.out[seq[k - 1]].push_back(seq[k]);
      g.walk[seq[k - 1]].push_back(seq[k]);
      g.walk[seq[k]].push_back(seq[k - 1]);
    }
  }
  for (auto& v : g.out) sort_unique(v);
  for (auto& v : g.walk) sort_unique(v);
  return g;
}

void Node2VecConfig::validate() const {
  if (walks_per_node == 0 || walk_length == 0 || window == 0 || negatives == 0) {
    throw DomainError("Node2VecConfig: counts must be positive");
  }
  if (!(p > 0.0) || !(q > 0.0) || !(learning_rate > 0.0)) {
    throw DomainError("Node2VecConfig: p, q and learning_rate must be positive");
  }
}

WalkCorpus random_walks(const TransitionGraph& g, const Node2VecConfig& cfg) {
  cfg.validate();
  if (g.num_nodes == 0) throw DomainError("random_walks: empty graph");
  const std::size_t total = g.num_nodes * cfg.walks_per_node;
  WalkCorpus corpus(total);
  const bool uniform = cfg.p == 1.0 && cfg.q == 1.0;

  const auto n_walks = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < n_walks; ++w) {
    const auto start = static_cast<std::uint32_t>(static_cast<std::size_t>(w) % g.num_nodes);
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(w)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::uint32_t> walk{start};
    walk.reserve(cfg.walk_length);
    std::vector<double> weights;
    while (walk.size() < cfg.walk_length) {
      const std::uint32_t cur = walk.back();
      const auto& nbrs = g.walk[cur];
      if (nbrs.empty()) break;
      std::size_t pick = 0;
      if (walk.size() == 1 || uniform) {
        pick = std::min(nbrs.size() - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(nbrs.size())));
      } else {
        const std::uint32_t prev = walk[walk.size() - 2];
        weights.resize(nbrs.size());
        double sum = 0.0;
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
          const std::uint32_t x = nbrs[k];
          const double w8 = x == prev ? 1.0 / cfg.p : (g.walk_adjacent(prev, x) ? 1.0 : 1.0 / cfg.q);
          sum += w8;
          weights[k] = sum;
        }
        const double r = unit(rng) * sum;
        pick = static_cast<std::size_t>(std::upper_bound(weights.begin(), weights.end(), r) - weights.begin());
        pick = std::min(pick, nbrs.size() - 1);
      }
      walk.push_back(nbrs[pick]);
    }
    corpus[static_cast<std::size_t>(w)] = std::move(walk);
  }
  return corpus;
}

std::span<const double> EmbeddingTable::row(std::uint32_t index) const {
  const std::size_t r = std::min<std::size_t>(index, num_cells());
  return rows.row(r);
}

EmbeddingTable zero_table(TableRole role, std::size_t num_cells, std::size_t d) {
  return {role, nn::Matrix(num_cells + 1, d)};
}

EmbeddingTable skipgram_init(std::size_t num_cells, std::size_t d, std::uint64_t seed) {
  if (d == 0) throw DomainError("skipgram: dimension must be positive");
  EmbeddingTable t = zero_table(TableRole::kStructural, num_cells, d);
  std::mt19937_64 rng(mix_seed(seed, 0x5C1A));
  const double half = 0.5 / static_cast<double>(d);
  std::uniform_real_distribution<double> init(-half, half);
  for (std::size_t i = 0; i < num_cells * d; ++i) t.rows.data[i] = static_cast<float>(init(rng));
  return t;
}

SkipGramResult train_skipgram(const WalkCorpus& corpus, std::size_t num_cells, std::size_t d,
                              const Node2VecConfig& cfg) {
  cfg.validate();
  if (d == 0) throw DomainError("train_skipgram: dimension must be positive");
  if (corpus.empty()) throw DomainError("train_skipgram: empty corpus");

  SkipGramResult res{skipgram_init(num_cells, d, cfg.seed), {}, {}};
  if (cfg.epochs == 0) return res;

  std::vector<double> counts(num_cells, 0.0);
  std::size_t tokens = 0;
  for (const auto& walk : corpus) {
    for (std::uint32_t v : walk) {
      if (v >= num_cells) throw DomainError("train_skipgram: walk node out of range");
      counts[v] += 1.0;
    }
    tokens += walk.size();
  }
  std::vector<double> noise_cdf(num_cells);
  double acc = 0.0;
  for (std::size_t v = 0; v < num_cells; ++v) {
    acc += std::pow(counts[v], 0.75);
    noise_cdf[v] = acc;
  }

  nn::Matrix& in = res.table.rows;
  nn::Matrix out(num_cells, d);
  std::vector<double> grad_in(d);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5C1B));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto sample_noise = [&]() {
    const double r = unit(rng) * acc;
    const auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), r);
    return static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(it - noise_cdf.begin(),
                                                               static_cast<std::ptrdiff_t>(num_cells) - 1));
  };

  const double total_steps = static_cast<double>(cfg.epochs * tokens);
  double step = 0.0;
  std::vector<double> trace_sum(10, 0.0), trace_cnt(10, 0.0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    double loss_cnt = 0.0;
    std::size_t token_in_epoch = 0;
    for (const auto& walk : corpus) {
      for (std::size_t c = 0; c < walk.size(); ++c, ++token_in_epoch) {
        const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
        step += 1.0;
        const std::uint32_t center = walk[c];
        double* u = in.data.data() + static_cast<std::size_t>(center) * d;
        const std::size_t lo = c >= cfg.window ? c - cfg.window : 0;
        const std::size_t hi = std::min(walk.size() - 1, c + cfg.window);
        for (std::size_t o = lo; o <= hi; ++o) {
          if (o == c) continue;
          const std::uint32_t context = walk[o];
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          double pair_loss = 0.0;
          for (std::size_t s = 0; s <= cfg.negatives; ++s) {
            const bool positive = s == 0;
            const std::uint32_t target = positive ? context : sample_noise();
            if (!positive && target == context) continue;
            double* v = out.data.data() + static_cast<std::size_t>(target) * d;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += u[k] * v[k];
            pair_loss -= log_sigmoid(positive ? dot : -dot);
            const double g = ((positive ? 1.0 : 0.0) - sigmoid(dot)) * lr;
            for (std::size_t k = 0; k < d; ++k) {
              grad_in[k] += g * v[k];
              v[k] += g * u[k];
            }
          }
          for (std::size_t k = 0; k < d; ++k) u[k] += grad_in[k];
          loss_sum += pair_loss;
          loss_cnt += 1.0;
          if (epoch == 0) {
            const std::size_t bucket = std::min<std::size_t>(9, token_in_epoch * 10 / tokens);
            trace_sum[bucket] += pair_loss;
            trace_cnt[bucket] += 1.0;
          }
        }
      }
    }
    res.epoch_loss.push_back(loss_cnt > 0.0 ? loss_sum / loss_cnt : 0.0);
  }
  // Tables persist as float; round so in-memory and reloaded tables agree.
  for (double& x : in.data) x = static_cast<float>(x);
  for (std::size_t b = 0; b < 10; ++b) {
    res.trace.push_back(trace_cnt[b] > 0.0 ? trace_sum[b] / trace_cnt[b] : 0.0);
  }
  return res;
}

std::vector<double> synth_visual_row(std::uint64_t cell, int zoom, std::size_t d, std::uint64_t seed) {
  const Tile t = tile_of_cell(cell, zoom);
  const std::uint64_t gx = t.x / kVisualLattice;
  const std::uint64_t gy = t.y / kVisualLattice;
  const double fx = (static_cast<double>(t.x % kVisualLattice) + 0.5) / static_cast<double>(kVisualLattice);
  const double fy = (static_cast<double>(t.y % kVisualLattice) + 0.5) / static_cast<double>(kVisualLattice);
  const auto lattice = [&](std::uint64_t x, std::uint64_t y) {
    return gaussian_vector(mix_seed(seed, mix_seed(x, y)), d);
  };
  const auto v00 = lattice(gx, gy);
  const auto v10 = lattice(gx + 1, gy);
  const auto v01 = lattice(gx, gy + 1);
  const auto v11 = lattice(gx + 1, gy + 1);
  const auto own = gaussian_vector(mix_seed(seed ^ 0xA5A5A5A5ULL, cell), d);

  std::vector<double> v(d);
  double norm2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    v[k] = (1 - fx) * (1 - fy) * v00[k] + fx * (1 - fy) * v10[k] + (1 - fx) * fy * v01[k] +
           fx * fy * v11[k] + 0.25 * own[k];
    norm2 += v[k] * v[k];
  }
  const double norm = std::sqrt(norm2);
  if (norm == 0.0) {
    v.assign(d, 0.0);
    if (d > 0) v[0] = 1.0;
    return v;
  }
  // Stored as float in visual-feature files; keep the in-memory row identical.
  for (double& x : v) x = static_cast<float>(x / norm);
  return v;
}

EmbeddingTable synth_visual_table(const CellVocab& vocab, int zoom, std::size_t d, std::uint64_t seed) {
  EmbeddingTable t = zero_table(TableRole::kVisual, vocab.size(), d);
  const auto m = static_cast<std::ptrdiff_t>(vocab.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto row = synth_visual_row(vocab.cell(static_cast<std::uint32_t>(i)), zoom, d, seed);
    std::copy(row.begin(), row.end(), t.rows.row(static_cast<std::size_t>(i)).begin());
  }
  return t;
}

EmbeddingTable visual_table_from_features(const VisualFeatures& features, const CellVocab& vocab,
                                          std::size_t d) {
  if (features.d != d && !features.cells.empty()) {
    throw DomainError("visual features have dimension " + std::to_string(features.d) + ", expected " +
                      std::to_string(d));
  }
  EmbeddingTable t = zero_table(TableRole::kVisual, vocab.size(), d);
  std::unordered_map<std::uint64_t, std::size_t> seen;
  for (std::size_t r = 0; r < features.cells.size(); ++r) {
    const std::uint64_t cell = features.cells[r];
    if (!seen.emplace(cell, r).second) {
      throw DomainError("visual features: duplicate cell id " + std::to_string(cell));
    }
    const std::uint32_t idx = vocab.index(cell);
    if (idx == vocab.unk()) continue;
    const auto& vec = features.vectors[r];
    if (vec.size() != d) throw DomainError("visual features: row length mismatch");
    auto dst = t.rows.row(idx);
    for (std::size_t k = 0; k < d; ++k) dst[k] = vec[k];
  }
  return t;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace trajsim
