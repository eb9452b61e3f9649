#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <numeric>

#include "support.hpp"
#include "trajsim/error.hpp"
#include "trajsim/model.hpp"
#include "trajsim/nn/ops.hpp"

using namespace trajsim;
using nn::Mask;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.groupnorm_groups = 4;
  c.cde_hidden = 8;
  return c;
}

struct World {
  std::vector<GpsTrajectory> trajs;
  testing::Prepared prep;
};

const World& world() {
  static const World w = [] {
    World x;
    x.trajs = testing::clean_synthetic(GeneratorConfig{}, 12, 3);
    std::vector<std::size_t> fit{0, 1, 2, 3, 4, 5};
    Node2VecConfig n2v;
    n2v.walks_per_node = 2;
    n2v.epochs = 1;
    x.prep = testing::prepare(x.trajs, fit, 16, 3, n2v);
    return x;
  }();
  return w;
}

// values receives H^r, H^p, the MoE weights and the adjacency, in that order.
Matrix encode_one(const Model& m, const EncoderInput& in, std::vector<Matrix>* values = nullptr) {
  Tape t;
  const BoundParams p(t, m.params);
  EncodeTrace tr;
  const Var out = encode(p, m.cfg, world().prep.tables(), in, &tr);
  if (values) {
    for (Var v : {tr.region, tr.fused_points, tr.moe_weights, tr.adjacency}) values->push_back(t.value(v));
  }
  return t.value(out);
}

Matrix rand_points(std::size_t n, std::uint64_t seed = 77) {
  std::mt19937_64 rng(seed + n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(n, 16);
  for (double& v : m.data) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("initialization is deterministic and float-representable") {
  const Model a = init_model(small_config(), 5);
  const Model b = init_model(small_config(), 5);
  const Model c = init_model(small_config(), 6);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == c.params);
  for (std::size_t s = 0; s < a.params.size(); ++s) {
    for (double v : a.params.value(s).data) CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
  CHECK(a.params.contains("cls"));
  CHECK(a.params.contains("router.2.l2.w"));
  CHECK(a.params["cls"].cols == 16);
  CHECK_THROWS(a.params.slot("nope"));
}

TEST_CASE("invalid model configurations are rejected") {
  ModelConfig c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config();
  c.groupnorm_groups = 5;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config();
  c.cnn_kernel = 2;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("sinusoidal positions") {
  const auto p0 = sinusoidal_position(0, 6);
  CHECK(p0 == std::vector<double>{0, 1, 0, 1, 0, 1});
  const auto p3 = sinusoidal_position(3, 4);
  CHECK(p3[0] == doctest::Approx(std::sin(3.0)));
  CHECK(p3[3] == doctest::Approx(std::cos(3.0 * std::pow(10000.0, -0.5))));
}

TEST_CASE("embedding is unit norm and bit-invariant to padding") {
  const Model m = init_model(small_config(), 1);
  const auto& in = world().prep.inputs[0];
  const Matrix base = encode_one(m, in);
  REQUIRE(base.rows == 1);
  double n = 0;
  for (double v : base.data) n += v * v;
  CHECK(n == doctest::Approx(1.0));
  for (std::size_t extra : {1u, 4u, 17u}) {
    const EncoderInput padded =
        pad_input(in, in.cells.size() + extra, in.points.rows + 2 * extra, world().prep.vocab.unk());
    CHECK(encode_one(m, padded).data == base.data);
  }
}

TEST_CASE("padding invariance also holds with point-side queries") {
  ModelConfig c = small_config();
  c.query_side = QuerySide::kPoint;
  const Model m = init_model(c, 2);
  const auto& in = world().prep.inputs[1];
  const Matrix base = encode_one(m, in);
  const EncoderInput padded = pad_input(in, in.cells.size() + 3, in.points.rows + 5, world().prep.vocab.unk());
  CHECK(encode_one(m, padded).data == base.data);
  CHECK_FALSE(base.data == encode_one(init_model(small_config(), 2), in).data);
}

TEST_CASE("moe weights and correlation adjacency are row-stochastic") {
  const Model m = init_model(small_config(), 3);
  const auto& in = world().prep.inputs[2];
  const EncoderInput padded = pad_input(in, in.cells.size() + 2, in.points.rows + 3, world().prep.vocab.unk());
  std::vector<Matrix> v;
  encode_one(m, padded, &v);
  const Matrix& moe = v[2];
  const Matrix& adj = v[3];
  CHECK(moe.cols == 3);
  for (std::size_t r = 0; r < in.points.rows; ++r) {
    double s = 0;
    for (double w : moe.row(r)) {
      CHECK(w >= 0.0);
      s += w;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
    double a = 0;
    for (std::size_t c = 0; c < adj.cols; ++c) {
      a += adj(r, c);
      if (c >= in.points.rows) CHECK(adj(r, c) == 0.0);
    }
    CHECK(std::abs(a - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross-attention weights over points are row-stochastic") {
  const Model m = init_model(small_config(), 4);
  const auto& in = world().prep.inputs[3];
  std::vector<Matrix> v;
  encode_one(m, in, &v);
  const Matrix q = [&] {
    Tape t;
    return t.value(nn::linear(t.constant(v[0]), t.constant(m.params["fuse.q.w"]), t.constant(m.params["fuse.q.b"])));
  }();
  const Matrix k = [&] {
    Tape t;
    return t.value(nn::linear(t.constant(v[1]), t.constant(m.params["fuse.k.w"]), t.constant(m.params["fuse.k.b"])));
  }();
  for (std::size_t h = 0; h < 2; ++h) {
    const Matrix w = nn::attention_weights(q, k, 2, h, in.point_mask);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double s = std::accumulate(w.row(r).begin(), w.row(r).end(), 0.0);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("batched forward matches the serial reference and single encodes") {
  const Model m = init_model(small_config(), 7);
  const auto& inputs = world().prep.inputs;
  const Matrix par = model_forward(m, world().prep.tables(), inputs);
  const Matrix ser = model_forward_serial(m, world().prep.tables(), inputs);
  CHECK(par.data == ser.data);
  REQUIRE(par.rows == inputs.size());
  for (std::size_t i : {0u, 5u, 11u}) {
    const Matrix one = encode_one(m, inputs[i]);
    CHECK(std::equal(one.data.begin(), one.data.end(), par.row(i).begin()));
  }
}

TEST_CASE("unknown cells read the unk row") {
  const Model m = init_model(small_config(), 8);
  EncoderInput in = world().prep.inputs[9];
  for (auto& c : in.cells) c = world().prep.vocab.unk();
  const Matrix e = encode_one(m, in);
  for (double v : e.data) CHECK(std::isfinite(v));
}

TEST_CASE("encoder rejects inputs it cannot handle") {
  const Model m = init_model(small_config(), 9);
  EncoderInput in = world().prep.inputs[0];
  in.point_mask.assign(in.point_mask.size(), 0);
  in.point_mask[0] = 1;
  CHECK_THROWS(encode_one(m, in));
  std::vector<EncoderInput> batch{world().prep.inputs[0], in};
  CHECK_THROWS_WITH_AS(model_forward(m, world().prep.tables(), batch), doctest::Contains("batch element 1"),
                       DomainError);
}

namespace {

Matrix run_block(const Model& m, const std::function<Var(const BoundParams&, Tape&)>& f) {
  Tape t;
  const BoundParams p(t, m.params);
  return t.value(f(p, t));
}

Matrix points_of(std::size_t i) { return world().prep.inputs[i].points; }

}  // namespace

TEST_CASE("point projection with zero weights returns the bias") {
  Model m = init_model(small_config(), 10);
  std::fill(m.params["point.w"].data.begin(), m.params["point.w"].data.end(), 0.0);
  const Matrix b = m.params["point.b"] = Matrix(1, 16, 0.25);
  const Matrix out = run_block(m, [](const BoundParams& p, Tape& t) { return point_project(p, t.constant(points_of(0))); });
  for (std::size_t r = 0; r < out.rows; ++r) CHECK(std::equal(out.row(r).begin(), out.row(r).end(), b.data.begin()));
  CHECK_THROWS_AS(run_block(m, [](const BoundParams& p, Tape& t) { return point_project(p, t.constant(Matrix(3, 5))); }),
                  DomainError);
}

TEST_CASE("locality expert has a receptive field of three positions each side") {
  const Model m = init_model(small_config(), 11);
  const Matrix ep = rand_points(12);
  const Mask mask(12, 1);
  const auto run = [&](const Matrix& x) {
    return run_block(m, [&](const BoundParams& p, Tape& t) {
      return expert_locality(p, m.cfg, t.constant(x), mask);
    });
  };
  const Matrix base = run(ep);
  Matrix bumped = ep;
  for (std::size_t c = 0; c < 16; ++c) bumped(6, c) += 0.5;
  const Matrix moved = run(bumped);
  for (std::size_t r = 0; r < 12; ++r) {
    bool changed = false;
    for (std::size_t c = 0; c < 16; ++c) changed = changed || moved(r, c) != base(r, c);
    CHECK(changed == (r >= 3 && r <= 9));
  }
}

TEST_CASE("locality expert maps a constant input to zero") {
  Model m = init_model(small_config(), 12);
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string pre = "loc." + std::to_string(l);
    Matrix& w = m.params[pre + ".w"];
    std::fill(w.data.begin(), w.data.end(), 0.0);
    for (std::size_t tap = 0; tap < 3; ++tap) {
      for (std::size_t c = 0; c < 16; ++c) w(tap * 16 + c, c) = 1.0;
    }
    std::fill(m.params[pre + ".b"].data.begin(), m.params[pre + ".b"].data.end(), 0.0);
  }
  // Interior rows see three equal taps; the normalization removes the constant.
  const Matrix out = run_block(m, [&](const BoundParams& p, Tape& t) {
    return expert_locality(p, m.cfg, t.constant(Matrix(8, 16, 0.7)), Mask(8, 1));
  });
  for (std::size_t r = 0; r < 8; ++r) {
    for (double v : out.row(r)) CHECK(std::abs(v) < 1e-6);
  }
}

TEST_CASE("correlation adjacency of a single point is one") {
  const Model m = init_model(small_config(), 13);
  Var adj;
  Tape t;
  const BoundParams p(t, m.params);
  expert_correlation(p, t.constant(rand_points(1)), Mask{1}, &adj);
  CHECK(t.value(adj).data == std::vector<double>{1.0});
}

TEST_CASE("continuity expert is constant for a zero field or a constant path") {
  Model m = init_model(small_config(), 14);
  const auto run = [&](const Model& mm, const Matrix& x) {
    return run_block(mm, [&](const BoundParams& p, Tape& t) {
      return expert_continuity(p, mm.cfg, t.constant(x), Mask(x.rows, 1));
    });
  };
  const Matrix constant_path = run(m, Matrix(6, 16, 0.3));
  // Spline slopes of a constant path vanish up to rounding in the knot weights.
  for (std::size_t r = 1; r < 6; ++r) {
    for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(constant_path(r, c) - constant_path(0, c)) < 1e-12);
  }
  for (const char* name : {"con.f2.w", "con.f2.b"}) {
    std::fill(m.params[name].data.begin(), m.params[name].data.end(), 0.0);
  }
  const Matrix zero_field = run(m, rand_points(7));
  for (std::size_t r = 1; r < 7; ++r) CHECK(std::equal(zero_field.row(r).begin(), zero_field.row(r).end(), zero_field.row(0).begin()));
  CHECK_THROWS_AS(run(m, rand_points(1)), DomainError);
}

TEST_CASE("identical router outputs average the experts") {
  Model m = init_model(small_config(), 15);
  for (std::size_t r = 0; r < 3; ++r) {
    const std::string pre = "router." + std::to_string(r);
    std::fill(m.params[pre + ".l2.w"].data.begin(), m.params[pre + ".l2.w"].data.end(), 0.0);
    m.params[pre + ".l2.b"](0, 0) = 0.0;
  }
  const Matrix a = rand_points(5), b = rand_points(5), c = rand_points(5);
  Var w;
  Tape t;
  const BoundParams p(t, m.params);
  const Var out = moe_fuse(p, t.constant(a), t.constant(b), t.constant(c), &w);
  for (double v : t.value(w).data) CHECK(v == doctest::Approx(1.0 / 3.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(t.value(out).data[i] == doctest::Approx((a.data[i] + b.data[i] + c.data[i]) / 3.0));
  }
}

TEST_CASE("moe weights are unchanged by a shared logit shift") {
  Model m = init_model(small_config(), 16);
  const Matrix a = rand_points(4), b = rand_points(4), c = rand_points(4);
  const auto weights = [&](const Model& mm) {
    Var w;
    Tape t;
    const BoundParams p(t, mm.params);
    moe_fuse(p, t.constant(a), t.constant(b), t.constant(c), &w);
    return t.value(w);
  };
  const Matrix before = weights(m);
  for (std::size_t r = 0; r < 3; ++r) m.params["router." + std::to_string(r) + ".l2.b"](0, 0) += 2.0;
  const Matrix after = weights(m);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after.data[i] == doctest::Approx(before.data[i]).epsilon(1e-12));
}

TEST_CASE("single point fusion attends to that point only") {
  const Model m = init_model(small_config(), 17);
  Tape t;
  const BoundParams p(t, m.params);
  const Matrix hr = rand_points(4), hp = rand_points(1);
  Var cross;
  fuse_and_embed(p, m.cfg, t.constant(hr), Mask(3, 1), t.constant(hp), Mask{1}, &cross);
  const Matrix v = [&] {
    Tape u;
    const Var x = nn::linear(u.constant(hp), u.constant(m.params["fuse.v.w"]), u.constant(m.params["fuse.v.b"]));
    return u.value(nn::linear(x, u.constant(m.params["fuse.o.w"]), u.constant(m.params["fuse.o.b"])));
  }();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 16; ++c) CHECK(t.value(cross)(r, c) == doctest::Approx(v(0, c)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(fuse_and_embed(p, m.cfg, t.constant(hr), Mask(3, 1), t.constant(hp), Mask{0}), DomainError);
}

TEST_CASE("single-cell region sequence with identity value path") {
  Model m = init_model(small_config(), 18);
  const EmbeddingTable zs = zero_table(TableRole::kStructural, 1, 16);
  const EmbeddingTable zv = zero_table(TableRole::kVisual, 1, 16);
  const RegionTables tables{&zs, &zv};
  const std::vector<std::uint32_t> cells{0};
  // With two positions (CLS and the cell), zeroed q/k make attention uniform;
  // identity v/o then return the mean of the inputs at every row.
  for (const char* side : {"region.s", "region.v"}) {
    for (const char* proj : {".q", ".k"}) {
      auto& w = m.params[std::string(side) + proj + ".w"];
      std::fill(w.data.begin(), w.data.end(), 0.0);
    }
    for (const char* proj : {".v", ".o"}) {
      auto& w = m.params[std::string(side) + proj + ".w"];
      std::fill(w.data.begin(), w.data.end(), 0.0);
      for (std::size_t i = 0; i < 16; ++i) w(i, i) = 1.0;
      std::fill(m.params[std::string(side) + proj + ".b"].data.begin(),
                m.params[std::string(side) + proj + ".b"].data.end(), 0.0);
    }
  }
  const Matrix hr = run_block(m, [&](const BoundParams& p, Tape&) {
    return region_encode(p, m.cfg, tables, cells, Mask{1});
  });
  const auto pe0 = sinusoidal_position(0, 16);
  const auto pe1 = sinusoidal_position(1, 16);
  for (std::size_t c = 0; c < 16; ++c) {
    const double mean = 0.5 * (m.params["cls"](0, c) + pe0[c] + pe1[c]);
    CHECK(hr(0, c) == doctest::Approx(2.0 * mean));
    CHECK(hr(1, c) == doctest::Approx(2.0 * mean));
  }
}

TEST_CASE("permuting padding slots leaves valid region rows unchanged") {
  const Model m = init_model(small_config(), 19);
  const auto& base = world().prep.inputs[4];
  std::vector<std::uint32_t> a = base.cells, b = base.cells;
  Mask ma = base.region_mask, mb = base.region_mask;
  a.insert(a.end(), {1u, 2u});
  b.insert(b.end(), {2u, 1u});
  ma.insert(ma.end(), {0, 0});
  mb.insert(mb.end(), {0, 0});
  const auto run = [&](const std::vector<std::uint32_t>& cells, const Mask& mask) {
    return run_block(m, [&](const BoundParams& p, Tape&) {
      return region_encode(p, m.cfg, world().prep.tables(), cells, mask);
    });
  };
  const Matrix ha = run(a, ma), hb = run(b, mb);
  for (std::size_t r = 0; r <= base.cells.size(); ++r) CHECK(std::equal(ha.row(r).begin(), ha.row(r).end(), hb.row(r).begin()));
}

TEST_CASE("zeroed region tables make equal-length grid sequences indistinguishable") {
  const Model m = init_model(small_config(), 20);
  const EmbeddingTable zs = zero_table(TableRole::kStructural, world().prep.vocab.size(), 16);
  const EmbeddingTable zv = zero_table(TableRole::kVisual, world().prep.vocab.size(), 16);
  const RegionTables tables{&zs, &zv};
  const std::vector<std::uint32_t> a{0, 1, 2}, b{5, 3, 4};
  const auto run = [&](const std::vector<std::uint32_t>& cells) {
    return run_block(m, [&](const BoundParams& p, Tape&) { return region_encode(p, m.cfg, tables, cells, Mask(3, 1)); });
  };
  CHECK(run(a).data == run(b).data);
}

TEST_CASE("batching contract") {
  const Model m = init_model(small_config(), 21);
  const auto& inputs = world().prep.inputs;
  const auto tables = world().prep.tables();
  const Matrix one = model_forward(m, tables, std::span(inputs).subspan(2, 1));
  CHECK(one.data == encode_one(m, inputs[2]).data);
  std::vector<EncoderInput> shuffled{inputs[3], inputs[0], inputs[7]};
  const Matrix all = model_forward(m, tables, inputs);
  const Matrix sh = model_forward(m, tables, shuffled);
  const std::size_t order[] = {3, 0, 7};
  for (std::size_t r = 0; r < 3; ++r) CHECK(std::equal(sh.row(r).begin(), sh.row(r).end(), all.row(order[r]).begin()));
  for (std::size_t r = 0; r < all.rows; ++r) {
    double n = 0;
    for (double v : all.row(r)) n += v * v;
    CHECK(std::abs(n - 1.0) < 1e-6);
  }
}
