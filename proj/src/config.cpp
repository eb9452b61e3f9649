#include "trajsim/config.hpp"

#include <fstream>
#include <set>

#include "trajsim/error.hpp"

namespace trajsim {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw DomainError("config: '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.contains(k)) throw DomainError("config: unknown key '" + section + (section.empty() ? "" : ".") + k + "'");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string query_side_name(QuerySide q) { return q == QuerySide::kRegion ? "region" : "point"; }

QuerySide parse_query_side(const std::string& s) {
  if (s == "region") return QuerySide::kRegion;
  if (s == "point") return QuerySide::kPoint;
  throw DomainError("config: query_side must be 'region' or 'point', got '" + s + "'");
}

json box_to_json(const LonLatBox& b) { return json::array({b.min_lon, b.min_lat, b.max_lon, b.max_lat}); }

LonLatBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DomainError("config: bbox must be [min_lon, min_lat, max_lon, max_lat]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return json{{"d", c.d},
              {"heads", c.heads},
              {"cnn_kernel", c.cnn_kernel},
              {"cnn_layers", c.cnn_layers},
              {"groupnorm_groups", c.groupnorm_groups},
              {"cde_hidden", c.cde_hidden},
              {"cde_steps", c.cde_steps},
              {"leaky_slope", c.leaky_slope},
              {"dropout", c.dropout},
              {"query_side", query_side_name(c.query_side)}};
}

ModelConfig model_config_from_json(const json& j) {
  check_keys(j, "model", {"d", "heads", "cnn_kernel", "cnn_layers", "groupnorm_groups", "cde_hidden", "cde_steps",
                          "leaky_slope", "dropout", "query_side"});
  ModelConfig c;
  get(j, "d", c.d);
  get(j, "heads", c.heads);
  get(j, "cnn_kernel", c.cnn_kernel);
  get(j, "cnn_layers", c.cnn_layers);
  get(j, "groupnorm_groups", c.groupnorm_groups);
  get(j, "cde_hidden", c.cde_hidden);
  get(j, "cde_steps", c.cde_steps);
  get(j, "leaky_slope", c.leaky_slope);
  get(j, "dropout", c.dropout);
  if (j.contains("query_side")) c.query_side = parse_query_side(j.at("query_side").get<std::string>());
  return c;
}

void EngineConfig::finalize() {
  node2vec.seed = seed;
  train.seed = seed;
  generator.validate();
  clean.validate();
  grid.validate();
  node2vec.validate();
  model.validate();
  train.validate();
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0) {
    throw DomainError("config: split fractions must satisfy train > 0, val >= 0, train + val < 1");
  }
  if (metrics.hr.empty() && metrics.rmk.empty() && metrics.ndcg.empty()) {
    throw DomainError("config: metrics lists are all empty");
  }
}

EngineConfig config_from_json(const json& j) {
  try {
    check_keys(j, "", {"data", "artifacts", "seed", "split", "generator", "clean", "grid", "node2vec", "model",
                       "train", "measure", "metrics"});
    EngineConfig c;
    get(j, "data", c.data);
    get(j, "artifacts", c.artifacts);
    get(j, "seed", c.seed);
    if (j.contains("split")) {
      const json& s = j.at("split");
      check_keys(s, "split", {"train", "val"});
      get(s, "train", c.train_frac);
      get(s, "val", c.val_frac);
    }
    if (j.contains("generator")) {
      const json& g = j.at("generator");
      check_keys(g, "generator", {"count", "min_len", "max_len", "bbox", "clusters", "step_mean_m", "step_sd_m",
                                  "turn_sd_rad", "lateral_sd_m", "jitter_sd_m", "first_id"});
      GeneratorConfig& o = c.generator;
      get(g, "count", o.count);
      get(g, "min_len", o.min_len);
      get(g, "max_len", o.max_len);
      if (g.contains("bbox")) o.bbox = box_from_json(g.at("bbox"));
      get(g, "clusters", o.clusters);
      get(g, "step_mean_m", o.step_mean_m);
      get(g, "step_sd_m", o.step_sd_m);
      get(g, "turn_sd_rad", o.turn_sd_rad);
      get(g, "lateral_sd_m", o.lateral_sd_m);
      get(g, "jitter_sd_m", o.jitter_sd_m);
      get(g, "first_id", o.first_id);
    }
    if (j.contains("clean")) {
      const json& g = j.at("clean");
      check_keys(g, "clean", {"dedup_dist_m", "outlier_factor", "min_len", "max_len"});
      get(g, "dedup_dist_m", c.clean.dedup_dist_m);
      get(g, "outlier_factor", c.clean.outlier_factor);
      get(g, "min_len", c.clean.min_len);
      get(g, "max_len", c.clean.max_len);
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      check_keys(g, "grid", {"zoom", "bbox"});
      get(g, "zoom", c.grid.zoom);
      if (g.contains("bbox") && !g.at("bbox").is_null()) c.grid.bbox = box_from_json(g.at("bbox"));
    }
    if (j.contains("node2vec")) {
      const json& g = j.at("node2vec");
      check_keys(g, "node2vec", {"walks_per_node", "walk_length", "window", "negatives", "p", "q", "epochs",
                                 "learning_rate"});
      Node2VecConfig& o = c.node2vec;
      get(g, "walks_per_node", o.walks_per_node);
      get(g, "walk_length", o.walk_length);
      get(g, "window", o.window);
      get(g, "negatives", o.negatives);
      get(g, "p", o.p);
      get(g, "q", o.q);
      get(g, "epochs", o.epochs);
      get(g, "learning_rate", o.learning_rate);
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) {
      const json& g = j.at("train");
      check_keys(g, "train", {"temperature", "hard_negatives", "batch_size", "learning_rate", "epochs", "infonce",
                              "beta1", "beta2", "adam_eps"});
      TrainConfig& o = c.train;
      get(g, "temperature", o.temperature);
      get(g, "hard_negatives", o.hard_negatives);
      get(g, "batch_size", o.batch_size);
      get(g, "learning_rate", o.learning_rate);
      get(g, "epochs", o.epochs);
      get(g, "infonce", o.infonce);
      get(g, "beta1", o.beta1);
      get(g, "beta2", o.beta2);
      get(g, "adam_eps", o.adam_eps);
    }
    if (j.contains("measure")) c.measure = parse_measure(j.at("measure").get<std::string>());
    if (j.contains("metrics")) {
      const json& g = j.at("metrics");
      check_keys(g, "metrics", {"hr", "rmk", "ndcg"});
      get(g, "hr", c.metrics.hr);
      get(g, "rmk", c.metrics.rmk);
      get(g, "ndcg", c.metrics.ndcg);
    }
    return c;
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
}

json config_to_json(const EngineConfig& c) {
  json j;
  j["data"] = c.data;
  j["artifacts"] = c.artifacts;
  j["seed"] = c.seed;
  j["split"] = {{"train", c.train_frac}, {"val", c.val_frac}};
  const GeneratorConfig& g = c.generator;
  j["generator"] = {{"count", g.count},
                    {"min_len", g.min_len},
                    {"max_len", g.max_len},
                    {"bbox", box_to_json(g.bbox)},
                    {"clusters", g.clusters},
                    {"step_mean_m", g.step_mean_m},
                    {"step_sd_m", g.step_sd_m},
                    {"turn_sd_rad", g.turn_sd_rad},
                    {"lateral_sd_m", g.lateral_sd_m},
                    {"jitter_sd_m", g.jitter_sd_m},
                    {"first_id", g.first_id}};
  j["clean"] = {{"dedup_dist_m", c.clean.dedup_dist_m},
                {"outlier_factor", c.clean.outlier_factor},
                {"min_len", c.clean.min_len},
                {"max_len", c.clean.max_len}};
  j["grid"] = {{"zoom", c.grid.zoom}, {"bbox", c.grid.bbox ? box_to_json(*c.grid.bbox) : json(nullptr)}};
  const Node2VecConfig& n = c.node2vec;
  j["node2vec"] = {{"walks_per_node", n.walks_per_node}, {"walk_length", n.walk_length}, {"window", n.window},
                   {"negatives", n.negatives}, {"p", n.p}, {"q", n.q}, {"epochs", n.epochs},
                   {"learning_rate", n.learning_rate}};
  j["model"] = model_config_to_json(c.model);
  const TrainConfig& t = c.train;
  j["train"] = {{"temperature", t.temperature}, {"hard_negatives", t.hard_negatives}, {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate}, {"epochs", t.epochs}, {"infonce", t.infonce},
                {"beta1", t.beta1}, {"beta2", t.beta2}, {"adam_eps", t.adam_eps}};
  j["measure"] = std::string(measure_name(c.measure));
  j["metrics"] = {{"hr", c.metrics.hr}, {"rmk", c.metrics.rmk}, {"ndcg", c.metrics.ndcg}};
  return j;
}

EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace trajsim
