#ifndef TRAJSIM_CONFIG_HPP_
#define TRAJSIM_CONFIG_HPP_

#include <cstdint>
#include <string>

#include <json.hpp>

#include "trajsim/distance.hpp"
#include "trajsim/geo.hpp"
#include "trajsim/grid.hpp"
#include "trajsim/metrics.hpp"
#include "trajsim/model.hpp"
#include "trajsim/region.hpp"
#include "trajsim/synthetic.hpp"
#include "trajsim/train.hpp"

namespace trajsim {

/// Everything a pipeline command needs. Loaded from JSON; absent keys keep
/// the defaults below, unknown keys are rejected. The top-level seed feeds
/// every seeded stage.
struct EngineConfig {
  std::string data = "data/sample.csv";
  std::string artifacts = "artifacts";
  std::uint64_t seed = 0;
  double train_frac = 0.2;
  double val_frac = 0.1;
  GeneratorConfig generator{};
  CleanConfig clean{};
  GridSpec grid{};
  Node2VecConfig node2vec{};
  ModelConfig model{};
  TrainConfig train{};
  Measure measure = Measure::kDtw;
  MetricsSpec metrics{};

  // Copies seed into the per-stage configs and validates every section.
  void finalize();
};

EngineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const EngineConfig& c);
EngineConfig load_config(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace trajsim

#endif  // TRAJSIM_CONFIG_HPP_
