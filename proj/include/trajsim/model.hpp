#ifndef TRAJSIM_MODEL_HPP_
#define TRAJSIM_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trajsim/features.hpp"
#include "trajsim/nn/tape.hpp"
#include "trajsim/region.hpp"

namespace trajsim {

// Which sequence supplies the cross-attention queries in the fusion block.
enum class QuerySide : std::uint8_t { kRegion, kPoint };

struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t cnn_kernel = 3;
  std::size_t cnn_layers = 3;
  std::size_t groupnorm_groups = 8;
  std::size_t cde_hidden = 32;
  std::size_t cde_steps = 4;  // RK4 steps per knot interval
  double leaky_slope = 0.01;
  double dropout = 0.0;
  QuerySide query_side = QuerySide::kRegion;
  void validate() const;
};

/// Named parameter tensors with stable slot numbers.
///
/// Values are kept exactly representable as float so that a checkpoint
/// round trip through f32 is lossless.
class ParamSet {
 public:
  std::size_t add(std::string name, nn::Matrix value);
  std::size_t size() const { return values_.size(); }
  std::size_t slot(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::string& name(std::size_t slot) const { return names_.at(slot); }
  nn::Matrix& value(std::size_t slot) { return values_.at(slot); }
  const nn::Matrix& value(std::size_t slot) const { return values_.at(slot); }
  nn::Matrix& operator[](std::string_view name) { return values_[slot(name)]; }
  const nn::Matrix& operator[](std::string_view name) const { return values_[slot(name)]; }
  std::size_t scalar_count() const;
  // Rounds every entry to the nearest float.
  void snap_to_float();
  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<nn::Matrix> values_;
  std::unordered_map<std::string, std::size_t> slots_;
};

struct Model {
  ModelConfig cfg;
  ParamSet params;
};

// Fan-in scaled uniform weights, zero biases, unit norm gains.
Model init_model(const ModelConfig& cfg, std::uint64_t seed);

// Tape leaves for every parameter, indexed by slot.
class BoundParams {
 public:
  BoundParams(nn::Tape& tape, const ParamSet& params);
  // Reuses existing leaves; vars[s] stands for slot s.
  BoundParams(nn::Tape& tape, const ParamSet& params, std::vector<nn::Var> vars);
  nn::Var operator[](std::string_view name) const { return vars_[params_->slot(name)]; }
  nn::Tape& tape() const { return *tape_; }

 private:
  nn::Tape* tape_;
  const ParamSet* params_;
  std::vector<nn::Var> vars_;
};

struct RegionTables {
  const EmbeddingTable* structural = nullptr;
  const EmbeddingTable* visual = nullptr;
};

/// One trajectory as seen by the encoder. Cells are vocabulary indices;
/// points is n2 x 6. Masks flag real positions; padding may sit anywhere.
struct EncoderInput {
  std::vector<std::uint32_t> cells;
  nn::Mask region_mask;
  nn::Matrix points;
  nn::Mask point_mask;
};

EncoderInput make_input(std::vector<std::uint32_t> cells, const PointFeatureSeq& features);
// Appends padding rows up to (n1, n2); padded cells read the UNK row.
EncoderInput pad_input(const EncoderInput& in, std::size_t n1, std::size_t n2, std::uint32_t unk);

// Tape nodes of the intermediate results of one encode() call.
struct EncodeTrace {
  nn::Var region;       // H^r, (n1+1) x d
  nn::Var points;       // E^p
  nn::Var locality;     // E^loc
  nn::Var adjacency;    // correlation graph A
  nn::Var correlation;  // E^cor
  nn::Var continuity;   // E^con
  nn::Var moe_weights;  // n2 x 3
  nn::Var fused_points; // H^p
  nn::Var cross;        // H^o
  nn::Var output;       // 1 x d, unit norm
};

std::vector<double> sinusoidal_position(std::size_t pos, std::size_t d);

// Building blocks, usable on their own for tests and gradient checks.
nn::Var self_attention(const BoundParams& p, const std::string& prefix, std::size_t heads, nn::Var x,
                       const nn::Mask& mask);
nn::Var region_encode(const BoundParams& p, const ModelConfig& cfg, const RegionTables& tables,
                      std::span<const std::uint32_t> cells, const nn::Mask& mask);
nn::Var point_project(const BoundParams& p, nn::Var features);
nn::Var expert_locality(const BoundParams& p, const ModelConfig& cfg, nn::Var ep, const nn::Mask& mask);
nn::Var expert_correlation(const BoundParams& p, nn::Var ep, const nn::Mask& mask, nn::Var* adjacency = nullptr);
nn::Var expert_continuity(const BoundParams& p, const ModelConfig& cfg, nn::Var ep, const nn::Mask& mask);
nn::Var moe_fuse(const BoundParams& p, nn::Var loc, nn::Var cor, nn::Var con, nn::Var* weights = nullptr);
nn::Var fuse_and_embed(const BoundParams& p, const ModelConfig& cfg, nn::Var hr, const nn::Mask& region_mask,
                       nn::Var hp, const nn::Mask& point_mask, nn::Var* cross = nullptr);

// Full encoder on a tape; returns the 1 x d unit-norm trajectory embedding.
nn::Var encode(const BoundParams& p, const ModelConfig& cfg, const RegionTables& tables, const EncoderInput& in,
               EncodeTrace* trace = nullptr);

/// Embeds a batch; elements are padded to the batch maximum and encoded in
/// parallel. Row i of the result is the embedding of inputs[i].
nn::Matrix model_forward(const Model& m, const RegionTables& tables, std::span<const EncoderInput> inputs);
nn::Matrix model_forward_serial(const Model& m, const RegionTables& tables, std::span<const EncoderInput> inputs);

}  // namespace trajsim

#endif  // TRAJSIM_MODEL_HPP_
