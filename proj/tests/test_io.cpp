#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "support.hpp"
#include "trajsim/config.hpp"
#include "trajsim/error.hpp"
#include "trajsim/io.hpp"

using namespace trajsim;
using nn::Matrix;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.groupnorm_groups = 4;
  c.cde_hidden = 8;
  return c;
}

template <typename F>
void check_rejects_flipped_magic(std::vector<std::uint8_t> bytes, F decode) {
  for (std::size_t i = 0; i < 4; ++i) {
    auto bad = bytes;
    bad[i] ^= 0x20;
    CHECK_THROWS_AS(decode(bad), FormatError);
  }
  bytes.pop_back();
  CHECK_THROWS_AS(decode(bytes), FormatError);
}

fs::path temp_dir() {
  const fs::path p = fs::temp_directory_path() / "trajsim_test_io";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("TDM1 layout for n = 1 is 13 bytes") {
  const DistanceMatrix d{Measure::kDfd, 1, {0.0f}};
  const auto bytes = encode_distance_matrix(d);
  REQUIRE(bytes.size() == 13);
  CHECK(std::memcmp(bytes.data(), "TDM1", 4) == 0);
  CHECK(bytes[4] == 2);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 0);
  for (std::size_t i = 9; i < 13; ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("TDM1 stores little-endian floats row-major") {
  const DistanceMatrix d{Measure::kDtw, 2, {0.0f, 1.5f, 1.5f, 0.0f}};
  const auto bytes = encode_distance_matrix(d);
  REQUIRE(bytes.size() == 9 + 16);
  // 1.5f = 0x3FC00000
  CHECK(bytes[13] == 0x00);
  CHECK(bytes[15] == 0xC0);
  CHECK(bytes[16] == 0x3F);
}

TEST_CASE("distance matrix round trip and validation") {
  std::vector<Polyline> set;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 7; ++i) set.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}});
  const DistanceMatrix d = pairwise_matrix(set, Measure::kEdwp);
  const auto bytes = encode_distance_matrix(d);
  const DistanceMatrix back = decode_distance_matrix(bytes);
  CHECK(back.measure == Measure::kEdwp);
  CHECK(std::memcmp(back.values.data(), d.values.data(), d.values.size() * 4) == 0);
  CHECK(encode_distance_matrix(back) == bytes);
  check_rejects_flipped_magic(bytes, [](const auto& b) { return decode_distance_matrix(b); });
  auto asym = bytes;
  asym[9 + 4 * 1] ^= 0x01;
  CHECK_THROWS_AS(decode_distance_matrix(asym), FormatError);
  auto diag = bytes;
  diag[9 + 3] = 0x3F;
  CHECK_THROWS_AS(decode_distance_matrix(diag), FormatError);
  auto measure = bytes;
  measure[4] = 9;
  CHECK_THROWS_AS(decode_distance_matrix(measure), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_distance_matrix(longer), FormatError);
}

TEST_CASE("embedding file round trip") {
  EmbeddingFile e{{10, 20, 99999999999ULL}, Matrix(3, 4)};
  for (std::size_t i = 0; i < e.values.size(); ++i) e.values.data[i] = static_cast<float>(0.1 * static_cast<double>(i) - 0.3);
  const auto bytes = encode_embeddings(e);
  CHECK(bytes.size() == 4 + 4 + 4 + 3 * 4 * 4 + 3 * 8);
  const EmbeddingFile back = decode_embeddings(bytes);
  CHECK(back.ids == e.ids);
  CHECK(back.values == e.values);
  check_rejects_flipped_magic(bytes, [](const auto& b) { return decode_embeddings(b); });
  const fs::path p = temp_dir() / "e.temb";
  save_embeddings(p, e);
  CHECK(load_embeddings(p, 4).ids == e.ids);
  CHECK_THROWS_AS(load_embeddings(p, 5), DomainError);
}

TEST_CASE("visual feature file round trip and duplicate rejection") {
  VisualFeatures v{3, {5, 7}, {{1.0f, -2.0f, 0.5f}, {0.0f, 3.25f, -1.0f}}};
  const auto bytes = encode_visual(v);
  CHECK(bytes.size() == 12 + 2 * (8 + 12));
  const VisualFeatures back = decode_visual(bytes);
  CHECK(back.cells == v.cells);
  CHECK(back.vectors == v.vectors);
  CHECK(encode_visual(back) == bytes);
  check_rejects_flipped_magic(bytes, [](const auto& b) { return decode_visual(b); });
  v.cells[1] = 5;
  CHECK_THROWS_AS(decode_visual(encode_visual(v)), FormatError);
  const VisualFeatures empty{3, {}, {}};
  CHECK(decode_visual(encode_visual(empty)).cells.empty());
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit-exactly") {
  const auto trajs = testing::clean_synthetic(GeneratorConfig{}, 6, 2);
  const std::vector<std::size_t> fit{0, 1, 2, 3, 4, 5};
  Node2VecConfig n2v;
  n2v.walks_per_node = 2;
  n2v.epochs = 1;
  const testing::Prepared prep = testing::prepare(trajs, fit, 16, 2, n2v);
  const Model m = init_model(small_config(), 3);
  const auto bytes = encode_checkpoint(m);
  const Model back = decode_checkpoint(bytes, small_config());
  CHECK(back.params == m.params);
  CHECK(model_forward(back, prep.tables(), prep.inputs).data == model_forward(m, prep.tables(), prep.inputs).data);
  CHECK(encode_checkpoint(back) == bytes);
  check_rejects_flipped_magic(bytes, [](const auto& b) { return decode_checkpoint(b); });
  ModelConfig other = small_config();
  other.cde_steps = 8;
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes, other), doctest::Contains("does not match"), DomainError);
  const fs::path p = temp_dir() / "m.tckp";
  save_checkpoint(p, m);
  CHECK(load_checkpoint(p).params == m.params);
}

TEST_CASE("checkpoint loading lists missing and extra tensors") {
  Model m = init_model(small_config(), 4);
  ParamSet renamed;
  for (std::size_t s = 0; s < m.params.size(); ++s) {
    const std::string name = m.params.name(s) == "cls" ? "cls_token" : m.params.name(s);
    renamed.add(name, m.params.value(s));
  }
  m.params = renamed;
  const auto bytes = encode_checkpoint(m);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes), doctest::Contains("missing [cls], extra [cls_token]"), DomainError);
}

TEST_CASE("trajectory CSV parsing") {
  CHECK(parse_trajectories("traj_id,point_idx,lon,lat\n").empty());
  const auto t = parse_trajectories(
      "traj_id,point_idx,lon,lat\n7,0,1.5,2.5\n7,1,1.6,2.6\n7,2,1.7,2.7\n3,0,0,0\n3,1,0.1,0.1\n3,2,0.2,0.2\n");
  REQUIRE(t.size() == 2);
  CHECK(t[0].id == 7);
  CHECK(t[1].id == 3);
  CHECK(t[0].points[2] == LonLat{1.7, 2.7});
  CHECK_THROWS_WITH_AS(parse_trajectories("traj_id,point_idx,lon,lat\n1,1,1,1\n1,1,1,1\n"),
                       doctest::Contains("line 3"), DomainError);
  CHECK_THROWS_WITH_AS(parse_trajectories("traj_id,point_idx,lon,lat\n1,0,abc,1\n"), doctest::Contains("line 2"),
                       DomainError);
  CHECK_THROWS_AS(parse_trajectories("id,lon\n"), DomainError);
}

TEST_CASE("trajectory and grid files round trip") {
  const auto trajs = generate_synthetic(GeneratorConfig{.count = 5}, 6);
  const fs::path p = temp_dir() / "t.csv";
  save_trajectories(p, trajs);
  const auto back = load_trajectories(p);
  REQUIRE(back.size() == trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    CHECK(back[i].id == trajs[i].id);
    CHECK(back[i].points == trajs[i].points);
  }
  const std::vector<GridTrajectory> grid{{1, {5, 6, 7}}, {2, {9}}};
  const fs::path g = temp_dir() / "g.csv";
  save_grid(g, grid);
  const auto gb = load_grid(g);
  CHECK(gb[0].cells == grid[0].cells);
  CHECK(gb[1].id == 2);
}

TEST_CASE("norm stats json round trip") {
  const NormStats s{1.25, 2.5, -3.0, 4.0, 0.1};
  const NormStats b = parse_norm_stats(norm_stats_json(s));
  CHECK(b.x_min == s.x_min);
  CHECK(b.y_min == s.y_min);
  CHECK(b.d_max == s.d_max);
}

TEST_CASE("geojson export") {
  const GpsTrajectory q{1, {{-8.6, 41.1}, {-8.5, 41.2}}};
  const std::vector<GpsTrajectory> all{q, {2, {{-8.61, 41.11}, {-8.51, 41.21}}}, {3, {{0, 0}, {1, 1}}}};
  const std::vector<GeoResult> results{{2, 1, 10.0}, {3, 2, 20.0}};
  const auto j = nlohmann::json::parse(geojson_retrieval(q, all, results));
  CHECK(j["type"] == "FeatureCollection");
  REQUIRE(j["features"].size() == 3);
  CHECK(j["features"][0]["properties"]["role"] == "query");
  CHECK(j["features"][1]["properties"]["role"] == "result");
  CHECK(j["features"][2]["properties"]["rank"] == 2);
  CHECK(j["features"][1]["properties"]["distance"] == 10.0);
  CHECK(j["features"][0]["geometry"]["type"] == "LineString");
  CHECK(j["features"][0]["geometry"]["coordinates"][0][0] == -8.6);
  CHECK(j["features"][0]["geometry"]["coordinates"][0][1] == 41.1);
  CHECK(nlohmann::json::parse(geojson_retrieval(q, all, {}))["features"].size() == 1);
  const std::vector<GeoResult> unknown{{42, 1, 1.0}};
  CHECK_THROWS_AS(geojson_retrieval(q, all, unknown), DomainError);
}

TEST_CASE("config parsing is strict and round trips") {
  EngineConfig c = config_from_json(nlohmann::json::parse(R"({"seed": 3, "model": {"d": 32}, "measure": "dfd"})"));
  CHECK(c.seed == 3);
  CHECK(c.model.d == 32);
  CHECK(c.measure == Measure::kDfd);
  c.finalize();
  CHECK(c.train.seed == 3);
  const EngineConfig again = config_from_json(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
  CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json::parse(R"({"model": {"dim": 3}})")),
                       doctest::Contains("model.dim"), DomainError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"model": {"d": "x"}})")), DomainError);
  EngineConfig bad = config_from_json(nlohmann::json::parse(R"({"split": {"train": 0.8, "val": 0.3}})"));
  CHECK_THROWS_AS(bad.finalize(), DomainError);
}

TEST_CASE("the bundled sample config loads") {
  const EngineConfig c = load_config(TRAJSIM_SOURCE_DIR "/configs/sample.json");
  CHECK(c.generator.count == 100);
  CHECK(c.model.d == 64);
  CHECK_THROWS_AS(load_config(TRAJSIM_SOURCE_DIR "/configs/missing.json"), DomainError);
}
