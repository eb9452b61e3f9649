#ifndef TRAJSIM_TRAIN_HPP_
#define TRAJSIM_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "trajsim/distance.hpp"
#include "trajsim/model.hpp"

namespace trajsim {

struct TrainConfig {
  double temperature = 0.2;
  std::size_t hard_negatives = 1;
  std::size_t batch_size = 128;
  double learning_rate = 2e-5;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  // Put the positive inside the log-sum-exp (standard InfoNCE).
  bool infonce = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  void validate() const;
};

// Nearest neighbour of i under d, excluding i; ties go to the lower index.
std::uint32_t select_positive(const DistanceMatrix& d, std::size_t i);

// Top-k rows by cosine similarity to row i, excluding i and positive.
std::vector<std::uint32_t> mine_hard_negatives(const nn::Matrix& embeddings, std::size_t i, std::size_t positive,
                                               std::size_t k);

struct ContrastiveTerm {
  std::uint32_t anchor = 0;
  std::uint32_t positive = 0;
  std::vector<std::uint32_t> negatives;
};

struct LossResult {
  double value = 0.0;
  nn::Matrix grad;  // dL/dS, same shape as S
};

/// L = -(1/N) sum_i [ S(i, p_i)/tau - log sum_{j in N_i} exp(S(i, j)/tau) ]
/// over the N terms. With infonce the positive joins the log-sum-exp.
LossResult contrastive_loss(const nn::Matrix& s, std::span<const ContrastiveTerm> terms, double tau,
                            bool infonce = false);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double val_hr1 = 0.0;
};

struct TrainData {
  std::span<const EncoderInput> train;
  const DistanceMatrix* train_dist = nullptr;
  std::span<const EncoderInput> val;
  const RankLists* val_truth = nullptr;  // may be null: no validation
};

struct TrainResult {
  Model best;
  std::size_t best_epoch = 0;  // 0 = initialization
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
};

// Called after every epoch with the current parameters; returning false ends
// training after that epoch.
using EpochCallback = std::function<bool(const EpochLog&, const Model&)>;

/// Contrastive training with Adam. Each step takes a shard of anchors plus
/// their positives as one batch; hard negatives are mined from that batch.
/// Gradients are reduced in batch order, so results do not depend on the
/// thread count.
TrainResult train(const Model& init, const RegionTables& tables, const TrainData& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace trajsim

#endif  // TRAJSIM_TRAIN_HPP_
