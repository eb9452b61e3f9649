#include "trajsim/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "trajsim/config.hpp"
#include "trajsim/error.hpp"

namespace trajsim {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DomainError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DomainError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

namespace {

// ---------- little-endian packing ----------

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, const char* what) : b_(b), what_(what) {}
  void magic(const char* m) {
    need(4);
    if (std::memcmp(b_.data() + pos_, m, 4) != 0) throw FormatError(std::string(what_) + ": bad magic, expected " + m);
    pos_ += 4;
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Throws unless at least n more bytes remain.
  void need(std::uint64_t n) const {
    if (b_.size() - pos_ < n) throw FormatError(std::string(what_) + ": truncated file");
  }
  void finish() const {
    if (pos_ != b_.size()) throw FormatError(std::string(what_) + ": trailing bytes after payload");
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  const char* what_;
};

// ---------- CSV ----------

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

template <typename T>
bool parse_num(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <typename F>
void for_each_line(const std::string& text, F&& f) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    f(line_no, line);
    start = end + 1;
  }
}

}  // namespace

std::vector<GpsTrajectory> parse_trajectories(const std::string& text) {
  std::vector<GpsTrajectory> out;
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<std::uint64_t> last_idx;
  bool header = false;
  for_each_line(text, [&](std::size_t ln, std::string_view line) {
    if (line.empty()) return;
    if (!header) {
      if (line != "traj_id,point_idx,lon,lat") {
        throw DomainError("line " + std::to_string(ln) + ": expected header traj_id,point_idx,lon,lat");
      }
      header = true;
      return;
    }
    const auto f = split(line, ',');
    if (f.size() != 4) throw DomainError("line " + std::to_string(ln) + ": expected 4 fields, got " + std::to_string(f.size()));
    std::uint64_t id = 0;
    std::uint64_t idx = 0;
    LonLat p;
    if (!parse_num(f[0], id)) throw DomainError("line " + std::to_string(ln) + ": bad traj_id");
    if (!parse_num(f[1], idx)) throw DomainError("line " + std::to_string(ln) + ": bad point_idx");
    if (!parse_num(f[2], p.lon) || !std::isfinite(p.lon)) throw DomainError("line " + std::to_string(ln) + ": bad lon");
    if (!parse_num(f[3], p.lat) || !std::isfinite(p.lat)) throw DomainError("line " + std::to_string(ln) + ": bad lat");
    auto [it, fresh] = slot.try_emplace(id, out.size());
    if (fresh) {
      out.push_back({id, {}});
      last_idx.push_back(0);
    } else if (idx <= last_idx[it->second]) {
      throw DomainError("line " + std::to_string(ln) + ": point_idx " + std::to_string(idx) +
                        " not increasing for traj_id " + std::to_string(id));
    }
    last_idx[it->second] = idx;
    out[it->second].points.push_back(p);
  });
  if (!header) throw DomainError("trajectory CSV: missing header");
  return out;
}

std::vector<GpsTrajectory> load_trajectories(const fs::path& path) {
  try {
    return parse_trajectories(read_text(path));
  } catch (const FormatError&) {
    throw;
  } catch (const DomainError& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

void save_trajectories(const fs::path& path, std::span<const GpsTrajectory> trajs) {
  std::string s = "traj_id,point_idx,lon,lat\n";
  for (const GpsTrajectory& t : trajs) {
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      s += std::to_string(t.id) + ',' + std::to_string(i) + ',' + fmt_double(t.points[i].lon) + ',' +
           fmt_double(t.points[i].lat) + '\n';
    }
  }
  write_text(path, s);
}

std::vector<GridTrajectory> load_grid(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<GridTrajectory> out;
  bool header = false;
  for_each_line(text, [&](std::size_t ln, std::string_view line) {
    if (line.empty()) return;
    const std::string where = path.string() + ":" + std::to_string(ln) + ": ";
    if (!header) {
      if (line != "traj_id,cells") throw DomainError(where + "expected header traj_id,cells");
      header = true;
      return;
    }
    const auto f = split(line, ',');
    if (f.size() != 2) throw DomainError(where + "expected 2 fields");
    GridTrajectory g;
    if (!parse_num(f[0], g.id)) throw DomainError(where + "bad traj_id");
    for (std::string_view c : split(f[1], ';')) {
      std::uint64_t cell = 0;
      if (!parse_num(c, cell)) throw DomainError(where + "bad cell id");
      g.cells.push_back(cell);
    }
    out.push_back(std::move(g));
  });
  if (!header) throw DomainError(path.string() + ": missing header");
  return out;
}

void save_grid(const fs::path& path, std::span<const GridTrajectory> trajs) {
  std::string s = "traj_id,cells\n";
  for (const GridTrajectory& g : trajs) {
    s += std::to_string(g.id) + ',';
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
      if (i) s += ';';
      s += std::to_string(g.cells[i]);
    }
    s += '\n';
  }
  write_text(path, s);
}

// ---------- TDM1 ----------

std::vector<std::uint8_t> encode_distance_matrix(const DistanceMatrix& d) {
  if (d.values.size() != d.n * d.n) throw DomainError("distance matrix: value count does not match n");
  Writer w;
  w.bytes("TDM1", 4);
  w.u8(static_cast<std::uint8_t>(d.measure));
  w.u32(static_cast<std::uint32_t>(d.n));
  for (float v : d.values) w.f32(v);
  return w.take();
}

DistanceMatrix decode_distance_matrix(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "TDM1");
  r.magic("TDM1");
  const std::uint8_t m = r.u8();
  if (m < 1 || m > 3) throw FormatError("TDM1: unknown measure id " + std::to_string(m));
  DistanceMatrix d;
  d.measure = static_cast<Measure>(m);
  d.n = r.u32();
  r.need(static_cast<std::uint64_t>(d.n) * d.n * 4);
  d.values.resize(d.n * d.n);
  for (float& v : d.values) v = r.f32();
  r.finish();
  for (std::size_t i = 0; i < d.n; ++i) {
    if (d.at(i, i) != 0.0f) throw FormatError("TDM1: nonzero diagonal at " + std::to_string(i));
    for (std::size_t j = i + 1; j < d.n; ++j) {
      if (!(std::abs(static_cast<double>(d.at(i, j)) - d.at(j, i)) <= 1e-6)) {
        throw FormatError("TDM1: asymmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  return d;
}

void save_distance_matrix(const fs::path& path, const DistanceMatrix& d) { write_file(path, encode_distance_matrix(d)); }

DistanceMatrix load_distance_matrix(const fs::path& path) { return decode_distance_matrix(read_file(path)); }

// ---------- TEMB ----------

std::vector<std::uint8_t> encode_embeddings(const EmbeddingFile& e) {
  if (e.ids.size() != e.values.rows) throw DomainError("embeddings: id count does not match rows");
  Writer w;
  w.bytes("TEMB", 4);
  w.u32(static_cast<std::uint32_t>(e.values.rows));
  w.u32(static_cast<std::uint32_t>(e.values.cols));
  for (double v : e.values.data) w.f32(static_cast<float>(v));
  for (std::uint64_t id : e.ids) w.u64(id);
  return w.take();
}

EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "TEMB");
  r.magic("TEMB");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  r.need(static_cast<std::uint64_t>(n) * d * 4 + static_cast<std::uint64_t>(n) * 8);
  EmbeddingFile e{std::vector<std::uint64_t>(n), nn::Matrix(n, d)};
  for (double& v : e.values.data) v = r.f32();
  for (std::uint64_t& id : e.ids) id = r.u64();
  r.finish();
  return e;
}

void save_embeddings(const fs::path& path, const EmbeddingFile& e) { write_file(path, encode_embeddings(e)); }

EmbeddingFile load_embeddings(const fs::path& path, std::size_t expected_dim) {
  EmbeddingFile e = decode_embeddings(read_file(path));
  if (expected_dim != 0 && e.values.cols != expected_dim) {
    throw DomainError(path.string() + ": embedding dimension " + std::to_string(e.values.cols) + ", expected " +
                      std::to_string(expected_dim));
  }
  return e;
}

// ---------- TCKP ----------

std::vector<std::uint8_t> encode_checkpoint(const Model& m) {
  Writer w;
  w.bytes("TCKP", 4);
  w.str(model_config_to_json(m.cfg).dump());
  w.u32(static_cast<std::uint32_t>(m.params.size()));
  for (std::size_t s = 0; s < m.params.size(); ++s) {
    const nn::Matrix& v = m.params.value(s);
    w.str(m.params.name(s));
    w.u32(static_cast<std::uint32_t>(v.rows));
    w.u32(static_cast<std::uint32_t>(v.cols));
    for (double x : v.data) w.f32(static_cast<float>(x));
  }
  return w.take();
}

namespace {

Model decode_checkpoint_impl(std::span<const std::uint8_t> bytes, const ModelConfig* expected) {
  Reader r(bytes, "TCKP");
  r.magic("TCKP");
  const std::string echo = r.str();
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(nlohmann::json::parse(echo));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("TCKP: unreadable config echo: ") + e.what());
  }
  if (expected && model_config_to_json(*expected) != model_config_to_json(cfg)) {
    throw DomainError("TCKP: checkpoint config " + model_config_to_json(cfg).dump() + " does not match requested " +
                      model_config_to_json(*expected).dump());
  }
  const std::uint32_t count = r.u32();
  std::map<std::string, nn::Matrix> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    r.need(static_cast<std::uint64_t>(rows) * cols * 4);
    nn::Matrix v(rows, cols);
    for (double& x : v.data) x = r.f32();
    if (!tensors.emplace(name, std::move(v)).second) throw FormatError("TCKP: duplicate tensor " + name);
  }
  r.finish();

  Model m = init_model(cfg, 0);
  std::string missing;
  std::string extra;
  std::set<std::string> known;
  for (std::size_t s = 0; s < m.params.size(); ++s) {
    const std::string& name = m.params.name(s);
    known.insert(name);
    const auto it = tensors.find(name);
    if (it == tensors.end()) {
      missing += (missing.empty() ? "" : ", ") + name;
      continue;
    }
    if (!it->second.same_shape(m.params.value(s))) {
      throw DomainError("TCKP: tensor " + name + " has shape " + std::to_string(it->second.rows) + "x" +
                        std::to_string(it->second.cols) + ", expected " + std::to_string(m.params.value(s).rows) +
                        "x" + std::to_string(m.params.value(s).cols));
    }
    m.params.value(s) = std::move(it->second);
  }
  for (const auto& [name, v] : tensors) {
    if (!known.contains(name)) extra += (extra.empty() ? "" : ", ") + name;
  }
  if (!missing.empty() || !extra.empty()) {
    throw DomainError("TCKP: parameter set mismatch; missing [" + missing + "], extra [" + extra + "]");
  }
  return m;
}

}  // namespace

Model decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig& expected) {
  return decode_checkpoint_impl(bytes, &expected);
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) { return decode_checkpoint_impl(bytes, nullptr); }

void save_checkpoint(const fs::path& path, const Model& m) { write_file(path, encode_checkpoint(m)); }

Model load_checkpoint(const fs::path& path, const ModelConfig& expected) {
  return decode_checkpoint(read_file(path), expected);
}

Model load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

// ---------- TVIS ----------

std::vector<std::uint8_t> encode_visual(const VisualFeatures& v) {
  if (v.cells.size() != v.vectors.size()) throw DomainError("visual features: cell count does not match vectors");
  Writer w;
  w.bytes("TVIS", 4);
  w.u32(static_cast<std::uint32_t>(v.cells.size()));
  w.u32(static_cast<std::uint32_t>(v.d));
  for (std::size_t i = 0; i < v.cells.size(); ++i) {
    if (v.vectors[i].size() != v.d) throw DomainError("visual features: vector width does not match d");
    w.u64(v.cells[i]);
    for (float x : v.vectors[i]) w.f32(x);
  }
  return w.take();
}

VisualFeatures decode_visual(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "TVIS");
  r.magic("TVIS");
  const std::uint32_t count = r.u32();
  VisualFeatures v;
  v.d = r.u32();
  r.need(static_cast<std::uint64_t>(count) * (8 + 4 * static_cast<std::uint64_t>(v.d)));
  std::unordered_set<std::uint64_t> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t cell = r.u64();
    if (!seen.insert(cell).second) throw FormatError("TVIS: duplicate cell id " + std::to_string(cell));
    std::vector<float> vec(v.d);
    for (float& x : vec) x = r.f32();
    v.cells.push_back(cell);
    v.vectors.push_back(std::move(vec));
  }
  r.finish();
  return v;
}

void save_visual(const fs::path& path, const VisualFeatures& v) { write_file(path, encode_visual(v)); }

VisualFeatures load_visual(const fs::path& path) { return decode_visual(read_file(path)); }

// ---------- misc ----------

std::string norm_stats_json(const NormStats& s) {
  nlohmann::ordered_json j{{"x_min", s.x_min}, {"x_max", s.x_max}, {"y_min", s.y_min},
                           {"y_max", s.y_max}, {"d_max", s.d_max}};
  return j.dump(2) + "\n";
}

NormStats parse_norm_stats(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return {j.at("x_min").get<double>(), j.at("x_max").get<double>(), j.at("y_min").get<double>(),
            j.at("y_max").get<double>(), j.at("d_max").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("norm stats: ") + e.what());
  }
}

std::string geojson_retrieval(const GpsTrajectory& query, std::span<const GpsTrajectory> trajs,
                              std::span<const GeoResult> results) {
  std::unordered_map<std::uint64_t, const GpsTrajectory*> by_id;
  for (const GpsTrajectory& t : trajs) by_id.emplace(t.id, &t);
  const auto line = [](const GpsTrajectory& t) {
    nlohmann::json coords = nlohmann::json::array();
    for (const LonLat& p : t.points) coords.push_back({p.lon, p.lat});
    return nlohmann::json{{"type", "LineString"}, {"coordinates", coords}};
  };
  nlohmann::json features = nlohmann::json::array();
  features.push_back({{"type", "Feature"},
                      {"geometry", line(query)},
                      {"properties", {{"role", "query"}, {"traj_id", query.id}, {"rank", 0}, {"distance", 0.0}}}});
  for (const GeoResult& r : results) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) throw DomainError("export-geojson: unknown trajectory id " + std::to_string(r.id));
    features.push_back({{"type", "Feature"},
                        {"geometry", line(*it->second)},
                        {"properties", {{"role", "result"}, {"traj_id", r.id}, {"rank", r.rank}, {"distance", r.distance}}}});
  }
  const nlohmann::json fc{{"type", "FeatureCollection"}, {"features", features}};
  return fc.dump() + "\n";
}

}  // namespace trajsim
