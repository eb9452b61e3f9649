#include "trajsim/model.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <random>

#include "trajsim/error.hpp"
#include "trajsim/nn/cde.hpp"
#include "trajsim/nn/ops.hpp"
#include "trajsim/synthetic.hpp"

namespace trajsim {

using nn::Mask;
using nn::Matrix;
using nn::Tape;
using nn::Var;

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) throw DomainError("model: d must be a positive multiple of heads");
  if (cnn_kernel == 0 || cnn_kernel % 2 == 0) throw DomainError("model: cnn_kernel must be odd");
  if (groupnorm_groups == 0 || d % groupnorm_groups != 0) {
    throw DomainError("model: d must be divisible by groupnorm_groups");
  }
  if (cde_hidden == 0 || cde_hidden > d) throw DomainError("model: cde_hidden must be in [1, d]");
  if (cde_steps == 0) throw DomainError("model: cde_steps must be positive");
  if (d < 2) throw DomainError("model: d must be at least 2");
  if (dropout != 0.0) throw DomainError("model: dropout is not supported (must be 0)");
}

std::size_t ParamSet::add(std::string name, Matrix value) {
  if (slots_.contains(name)) throw DomainError("duplicate parameter name: " + name);
  slots_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return names_.size() - 1;
}

std::size_t ParamSet::slot(std::string_view name) const {
  const auto it = slots_.find(std::string(name));
  if (it == slots_.end()) throw DomainError("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParamSet::contains(std::string_view name) const { return slots_.contains(std::string(name)); }

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const Matrix& m : values_) n += m.size();
  return n;
}

void ParamSet::snap_to_float() {
  for (Matrix& m : values_) {
    for (double& v : m.data) v = static_cast<double>(static_cast<float>(v));
  }
}

namespace {

struct Initializer {
  ParamSet& ps;
  std::uint64_t seed;

  void weight(const std::string& name, std::size_t in, std::size_t out) {
    std::mt19937_64 rng(mix_seed(seed, ps.size()));
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(in, out);
    for (double& v : m.data) v = u(rng);
    ps.add(name, std::move(m));
  }
  void bias(const std::string& name, std::size_t out) { ps.add(name, Matrix(1, out)); }
  void linear(const std::string& prefix, std::size_t in, std::size_t out) {
    weight(prefix + ".w", in, out);
    bias(prefix + ".b", out);
  }
  void norm(const std::string& prefix, std::size_t width) {
    ps.add(prefix + ".gamma", Matrix(1, width, 1.0));
    ps.add(prefix + ".beta", Matrix(1, width));
  }
  void attention(const std::string& prefix, std::size_t d) {
    for (const char* part : {".q", ".k", ".v", ".o"}) linear(prefix + part, d, d);
  }
};

}  // namespace

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m{cfg, {}};
  Initializer init{m.params, seed};
  const std::size_t d = cfg.d;
  const std::size_t h = cfg.cde_hidden;

  init.linear("point", kPointFeatureDim, d);
  init.weight("cls", 1, d);
  init.attention("region.s", d);
  init.attention("region.v", d);
  for (std::size_t l = 0; l < cfg.cnn_layers; ++l) {
    const std::string prefix = "loc." + std::to_string(l);
    init.weight(prefix + ".w", cfg.cnn_kernel * d, d);
    init.bias(prefix + ".b", d);
    init.norm(prefix + ".gn", d);
  }
  init.linear("cor.proj", d, d);
  init.weight("cor.w", d, d);
  init.norm("cor.ln", d);
  init.linear("con.phi1", d, h);
  init.linear("con.phi2", h, h);
  init.linear("con.f1", h, h);
  init.linear("con.f2", h, h * d);
  init.linear("con.out", h, d);
  for (int r = 0; r < 3; ++r) {
    const std::string prefix = "router." + std::to_string(r);
    init.linear(prefix + ".l1", d, d / 2);
    init.linear(prefix + ".l2", d / 2, 1);
  }
  init.attention("fuse", d);
  init.norm("fuse.ln", d);
  init.linear("fuse.ffn1", d, 4 * d);
  init.linear("fuse.ffn2", 4 * d, d);
  m.params.snap_to_float();
  return m;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params) : tape_(&tape), params_(&params) {
  vars_.reserve(params.size());
  for (std::size_t s = 0; s < params.size(); ++s) vars_.push_back(tape.parameter(params.value(s), s));
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, std::vector<Var> vars)
    : tape_(&tape), params_(&params), vars_(std::move(vars)) {
  if (vars_.size() < params.size()) throw DomainError("BoundParams: fewer leaves than parameters");
}

EncoderInput make_input(std::vector<std::uint32_t> cells, const PointFeatureSeq& features) {
  EncoderInput in;
  in.region_mask.assign(cells.size(), 1);
  in.cells = std::move(cells);
  in.points = Matrix(features.size(), kPointFeatureDim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t c = 0; c < kPointFeatureDim; ++c) in.points(i, c) = features.rows[i][c];
  }
  in.point_mask.assign(features.size(), 1);
  return in;
}

EncoderInput pad_input(const EncoderInput& in, std::size_t n1, std::size_t n2, std::uint32_t unk) {
  if (n1 < in.cells.size() || n2 < in.points.rows) throw DomainError("pad_input: target shorter than input");
  EncoderInput out = in;
  out.cells.resize(n1, unk);
  out.region_mask.resize(n1, 0);
  Matrix pts(n2, in.points.cols);
  std::copy(in.points.data.begin(), in.points.data.end(), pts.data.begin());
  out.points = std::move(pts);
  out.point_mask.resize(n2, 0);
  return out;
}

std::vector<double> sinusoidal_position(std::size_t pos, std::size_t d) {
  std::vector<double> pe(d);
  for (std::size_t i = 0; i < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
    pe[i] = std::sin(static_cast<double>(pos) * freq);
    if (i + 1 < d) pe[i + 1] = std::cos(static_cast<double>(pos) * freq);
  }
  return pe;
}

Var self_attention(const BoundParams& p, const std::string& prefix, std::size_t heads, Var x, const Mask& mask) {
  const Var q = nn::linear(x, p[prefix + ".q.w"], p[prefix + ".q.b"]);
  const Var k = nn::linear(x, p[prefix + ".k.w"], p[prefix + ".k.b"]);
  const Var v = nn::linear(x, p[prefix + ".v.w"], p[prefix + ".v.b"]);
  const Var a = nn::attention(q, k, v, heads, mask);
  return nn::linear(a, p[prefix + ".o.w"], p[prefix + ".o.b"]);
}

namespace {

Var cross_attention(const BoundParams& p, std::size_t heads, Var queries, Var keys, const Mask& key_mask) {
  const Var q = nn::linear(queries, p["fuse.q.w"], p["fuse.q.b"]);
  const Var k = nn::linear(keys, p["fuse.k.w"], p["fuse.k.b"]);
  const Var v = nn::linear(keys, p["fuse.v.w"], p["fuse.v.b"]);
  const Var a = nn::attention(q, k, v, heads, key_mask);
  return nn::linear(a, p["fuse.o.w"], p["fuse.o.b"]);
}

// CLS row followed by table rows, plus position encoding.
Var region_sequence(const BoundParams& p, const EmbeddingTable& table, std::span<const std::uint32_t> cells,
                    std::size_t d) {
  Matrix rows(cells.size(), d);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto src = table.row(cells[i]);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  Tape& t = p.tape();
  Matrix pe(cells.size() + 1, d);
  for (std::size_t i = 0; i <= cells.size(); ++i) {
    const auto row = sinusoidal_position(i, d);
    std::copy(row.begin(), row.end(), pe.row(i).begin());
  }
  return nn::add(nn::concat_rows(p["cls"], t.constant(std::move(rows))), t.constant(std::move(pe)));
}

}  // namespace

Var region_encode(const BoundParams& p, const ModelConfig& cfg, const RegionTables& tables,
                  std::span<const std::uint32_t> cells, const Mask& mask) {
  if (!tables.structural || !tables.visual) throw DomainError("region_encode: missing embedding table");
  if (tables.structural->dim() != cfg.d || tables.visual->dim() != cfg.d) {
    throw DomainError("region_encode: embedding tables must have dimension " + std::to_string(cfg.d));
  }
  if (mask.size() != cells.size()) throw DomainError("region_encode: mask length mismatch");
  if (nn::count_valid(mask) == 0) throw DomainError("region_encode: empty grid sequence");
  Mask full(cells.size() + 1, 1);
  std::copy(mask.begin(), mask.end(), full.begin() + 1);
  const Var es = region_sequence(p, *tables.structural, cells, cfg.d);
  const Var ev = region_sequence(p, *tables.visual, cells, cfg.d);
  const Var hs = self_attention(p, "region.s", cfg.heads, es, full);
  const Var hv = self_attention(p, "region.v", cfg.heads, ev, full);
  return nn::add(hs, hv);
}

Var point_project(const BoundParams& p, Var features) {
  if (p.tape().value(features).cols != kPointFeatureDim) {
    throw DomainError("point_project: expected " + std::to_string(kPointFeatureDim) + " feature columns, got " +
                      std::to_string(p.tape().value(features).cols));
  }
  return nn::linear(features, p["point.w"], p["point.b"]);
}

Var expert_locality(const BoundParams& p, const ModelConfig& cfg, Var ep, const Mask& mask) {
  Var h = ep;
  for (std::size_t l = 0; l < cfg.cnn_layers; ++l) {
    const std::string prefix = "loc." + std::to_string(l);
    h = nn::conv1d_same(h, p[prefix + ".w"], p[prefix + ".b"], cfg.cnn_kernel, mask);
    h = nn::group_norm(h, cfg.groupnorm_groups, p[prefix + ".gn.gamma"], p[prefix + ".gn.beta"]);
    h = nn::leaky_relu(h, cfg.leaky_slope);
  }
  return h;
}

Var expert_correlation(const BoundParams& p, Var ep, const Mask& mask, Var* adjacency) {
  const Var e = nn::linear(ep, p["cor.proj.w"], p["cor.proj.b"]);
  const Var a = nn::softmax_rows(nn::relu(nn::matmul_nt(e, e)), &mask);
  if (adjacency) *adjacency = a;
  const Var agg = nn::matmul(nn::matmul(a, e), p["cor.w"]);
  return nn::layer_norm(agg, p["cor.ln.gamma"], p["cor.ln.beta"]);
}

Var expert_continuity(const BoundParams& p, const ModelConfig& cfg, Var ep, const Mask& mask) {
  if (nn::count_valid(mask) < 2) throw DomainError("continuity expert needs at least 2 points");
  std::size_t first = 0;
  while (!mask[first]) ++first;
  const Var e0 = nn::slice_rows(ep, first, 1);
  const Var z0 = nn::linear(nn::relu(nn::linear(e0, p["con.phi1.w"], p["con.phi1.b"])), p["con.phi2.w"],
                            p["con.phi2.b"]);
  const Var z = nn::cde_integrate(ep, z0, p["con.f1.w"], p["con.f1.b"], p["con.f2.w"], p["con.f2.b"],
                                  cfg.cde_steps, mask);
  return nn::linear(z, p["con.out.w"], p["con.out.b"]);
}

Var moe_fuse(const BoundParams& p, Var loc, Var cor, Var con, Var* weights) {
  const std::array<Var, 3> experts{loc, cor, con};
  std::array<Var, 3> logits;
  for (std::size_t r = 0; r < 3; ++r) {
    const std::string prefix = "router." + std::to_string(r);
    const Var hidden = nn::relu(nn::linear(experts[r], p[prefix + ".l1.w"], p[prefix + ".l1.b"]));
    logits[r] = nn::linear(hidden, p[prefix + ".l2.w"], p[prefix + ".l2.b"]);
  }
  const Var w = nn::softmax_rows(nn::concat_cols(logits));
  if (weights) *weights = w;
  Var out = nn::scale_rows(experts[0], nn::select_col(w, 0));
  for (std::size_t r = 1; r < 3; ++r) out = nn::add(out, nn::scale_rows(experts[r], nn::select_col(w, r)));
  return out;
}

Var fuse_and_embed(const BoundParams& p, const ModelConfig& cfg, Var hr, const Mask& region_mask, Var hp,
                   const Mask& point_mask, Var* cross) {
  if (nn::count_valid(point_mask) == 0) throw DomainError("fuse_and_embed: every point position is masked");
  Tape& t = p.tape();
  const auto ffn = [&](Var x) {
    const Var n = nn::layer_norm(x, p["fuse.ln.gamma"], p["fuse.ln.beta"]);
    const Var hidden = nn::relu(nn::linear(n, p["fuse.ffn1.w"], p["fuse.ffn1.b"]));
    return nn::linear(hidden, p["fuse.ffn2.w"], p["fuse.ffn2.b"]);
  };
  if (cfg.query_side == QuerySide::kRegion) {
    const Var ho = cross_attention(p, cfg.heads, hr, hp, point_mask);
    if (cross) *cross = ho;
    const Var e = nn::add(ffn(nn::add(ho, hr)), ho);
    return nn::l2_normalize_rows(nn::slice_rows(e, 0, 1));
  }
  // Point-side queries attend over the region sequence (CLS included);
  // the embedding is the masked mean of the fused point rows.
  Mask keys(t.value(hr).rows, 1);
  std::copy(region_mask.begin(), region_mask.end(), keys.begin() + 1);
  const Var ho = cross_attention(p, cfg.heads, hp, hr, keys);
  if (cross) *cross = ho;
  const Var e = nn::add(ffn(nn::add(ho, hp)), ho);
  Matrix pool(1, point_mask.size());
  const double inv = 1.0 / static_cast<double>(nn::count_valid(point_mask));
  for (std::size_t i = 0; i < point_mask.size(); ++i) pool.data[i] = point_mask[i] ? inv : 0.0;
  return nn::l2_normalize_rows(nn::matmul(t.constant(std::move(pool)), e));
}

Var encode(const BoundParams& p, const ModelConfig& cfg, const RegionTables& tables, const EncoderInput& in,
           EncodeTrace* trace) {
  if (in.point_mask.size() != in.points.rows) throw DomainError("encode: point mask length mismatch");
  Tape& t = p.tape();
  EncodeTrace local;
  EncodeTrace& tr = trace ? *trace : local;
  tr.region = region_encode(p, cfg, tables, in.cells, in.region_mask);
  tr.points = point_project(p, t.constant(in.points));
  tr.locality = expert_locality(p, cfg, tr.points, in.point_mask);
  tr.correlation = expert_correlation(p, tr.points, in.point_mask, &tr.adjacency);
  tr.continuity = expert_continuity(p, cfg, tr.points, in.point_mask);
  tr.fused_points = moe_fuse(p, tr.locality, tr.correlation, tr.continuity, &tr.moe_weights);
  tr.output = fuse_and_embed(p, cfg, tr.region, in.region_mask, tr.fused_points, in.point_mask, &tr.cross);
  return tr.output;
}

namespace {

Matrix forward_impl(const Model& m, const RegionTables& tables, std::span<const EncoderInput> inputs,
                    bool parallel) {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  for (const EncoderInput& in : inputs) {
    n1 = std::max(n1, in.cells.size());
    n2 = std::max(n2, in.points.rows);
  }
  const std::uint32_t unk = tables.structural ? static_cast<std::uint32_t>(tables.structural->num_cells()) : 0;
  Matrix out(inputs.size(), m.cfg.d);
  std::vector<std::exception_ptr> errors(inputs.size());
  const auto one = [&](std::size_t i) {
    try {
      Tape t;
      const BoundParams p(t, m.params);
      const EncoderInput padded = pad_input(inputs[i], n1, n2, unk);
      const Var e = encode(p, m.cfg, tables, padded);
      const auto row = t.value(e).row(0);
      std::copy(row.begin(), row.end(), out.row(i).begin());
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) one(static_cast<std::size_t>(i));
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) one(static_cast<std::size_t>(i));
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw DomainError("batch element " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

Matrix model_forward(const Model& m, const RegionTables& tables, std::span<const EncoderInput> inputs) {
  return forward_impl(m, tables, inputs, true);
}

Matrix model_forward_serial(const Model& m, const RegionTables& tables, std::span<const EncoderInput> inputs) {
  return forward_impl(m, tables, inputs, false);
}

}  // namespace trajsim
