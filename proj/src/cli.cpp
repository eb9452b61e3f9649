#include "trajsim/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajsim/config.hpp"
#include "trajsim/error.hpp"
#include "trajsim/features.hpp"
#include "trajsim/gradcheck.hpp"
#include "trajsim/io.hpp"
#include "trajsim/metrics.hpp"
#include "trajsim/model.hpp"
#include "trajsim/region.hpp"
#include "trajsim/synthetic.hpp"
#include "trajsim/train.hpp"

namespace trajsim {

void apply_thread_env() {
  const char* env = std::getenv("TRAJSIM_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0) throw UsageError("TRAJSIM_THREADS must be a non-negative integer");
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data;
  std::optional<std::string> artifacts;
  std::optional<std::string> measure;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> count;
  std::string split = "test";
  std::uint64_t query_id = 0;
  std::size_t k = 5;
  std::string out;
  std::string block = "all";
  double eps = 1e-5;
  std::size_t max_entries = 1000;
};

const char* const kSplits[] = {"train", "val", "test"};

// Artifact paths under the artifacts directory.
struct Workspace {
  fs::path dir;
  fs::path clean() const { return dir / "clean.csv"; }
  fs::path split() const { return dir / "split.json"; }
  fs::path grid() const { return dir / "grid.csv"; }
  fs::path norm() const { return dir / "norm_stats.json"; }
  fs::path features() const { return dir / "features.csv"; }
  fs::path dist(Measure m, const std::string& s) const {
    return dir / ("dist_" + std::string(measure_name(m)) + "_" + s + ".tdm");
  }
  fs::path vocab() const { return dir / "vocab.txt"; }
  fs::path graph() const { return dir / "graph.txt"; }
  fs::path structural() const { return dir / "structural.temb"; }
  fs::path visual() const { return dir / "visual.tvis"; }
  fs::path model() const { return dir / "model.tckp"; }
  fs::path loss_log() const { return dir / "loss_log.csv"; }
  fs::path epoch_log() const { return dir / "epochs.csv"; }
  fs::path embeddings(const std::string& s) const { return dir / ("embeddings_" + s + ".temb"); }
  fs::path metrics_txt() const { return dir / "metrics.txt"; }
  fs::path metrics_json() const { return dir / "metrics.json"; }
};

using SplitIds = std::map<std::string, std::vector<std::uint64_t>>;

SplitIds load_split(const Workspace& ws) {
  try {
    const auto j = nlohmann::json::parse(read_text(ws.split()));
    SplitIds s;
    for (const char* name : kSplits) s[name] = j.at(name).get<std::vector<std::uint64_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(ws.split().string() + ": " + e.what());
  }
}

void check_split_name(const std::string& s) {
  if (std::find(std::begin(kSplits), std::end(kSplits), s) == std::end(kSplits)) {
    throw UsageError("--split must be train, val or test");
  }
}

template <typename T>
std::vector<T> select(const std::vector<T>& all, const std::vector<std::uint64_t>& ids, const char* what) {
  std::unordered_map<std::uint64_t, const T*> by_id;
  for (const T& t : all) by_id.emplace(t.id, &t);
  std::vector<T> out;
  out.reserve(ids.size());
  for (std::uint64_t id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DomainError(std::string(what) + ": trajectory " + std::to_string(id) + " not found");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<Polyline> polylines(const std::vector<GpsTrajectory>& trajs) {
  std::vector<Polyline> out;
  for (const GpsTrajectory& t : trajs) out.push_back(project(t));
  return out;
}

CellVocab load_vocab(const Workspace& ws) {
  std::istringstream in(read_text(ws.vocab()));
  std::vector<std::uint64_t> cells;
  std::uint64_t c = 0;
  while (in >> c) cells.push_back(c);
  return CellVocab::from_cells(std::move(cells));
}

struct Tables {
  EmbeddingTable structural;
  EmbeddingTable visual;
  RegionTables view() const { return {&structural, &visual}; }
};

Tables load_tables(const Workspace& ws, const CellVocab& vocab, std::size_t d) {
  const EmbeddingFile s = load_embeddings(ws.structural(), d);
  if (s.ids != vocab.cells()) throw DomainError(ws.structural().string() + ": cell ids do not match the vocabulary");
  Tables t{zero_table(TableRole::kStructural, vocab.size(), d), {}};
  for (std::size_t r = 0; r < s.values.rows; ++r) {
    std::copy(s.values.row(r).begin(), s.values.row(r).end(), t.structural.rows.row(r).begin());
  }
  t.visual = visual_table_from_features(load_visual(ws.visual()), vocab, d);
  return t;
}

// Encoder inputs (and ids) for one split, in split order.
struct SplitInputs {
  std::vector<std::uint64_t> ids;
  std::vector<EncoderInput> inputs;
};

SplitInputs split_inputs(const Workspace& ws, const SplitIds& split, const std::string& name, const CellVocab& vocab) {
  const auto clean = load_trajectories(ws.clean());
  const auto grid = load_grid(ws.grid());
  const NormStats norm = parse_norm_stats(read_text(ws.norm()));
  const auto& ids = split.at(name);
  const auto trajs = select(clean, ids, "clean.csv");
  const auto cells = select(grid, ids, "grid.csv");
  SplitInputs out{ids, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.inputs.push_back(make_input(vocab.encode(cells[i]), extract_point_features(trajs[i], norm)));
  }
  return out;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

// ---------- commands ----------

void cmd_gen(const EngineConfig& c, const Options& o, std::ostream& out) {
  GeneratorConfig g = c.generator;
  if (o.count) g.count = *o.count;
  g.validate();
  const auto trajs = generate_synthetic(g, c.seed);
  const fs::path path = o.out.empty() ? fs::path(c.data) : fs::path(o.out);
  save_trajectories(path, trajs);
  out << "wrote " << trajs.size() << " trajectories to " << path.string() << "\n";
}

void cmd_clean(const EngineConfig& c, const Workspace& ws, std::ostream& out) {
  const auto raw = load_trajectories(c.data);
  std::vector<GpsTrajectory> kept;
  for (const GpsTrajectory& t : raw) {
    if (auto r = clean_trajectory(t.id, t.points, c.clean)) kept.push_back(std::move(*r));
  }
  if (kept.size() < 3) throw DomainError("clean: fewer than 3 trajectories survive cleaning");
  save_trajectories(ws.clean(), kept);
  const DatasetSplit split = split_dataset(kept.size(), c.seed, c.train_frac, c.val_frac);
  nlohmann::json j;
  const auto ids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::uint64_t> v;
    for (std::size_t i : idx) v.push_back(kept[i].id);
    return v;
  };
  j["train"] = ids(split.train);
  j["val"] = ids(split.val);
  j["test"] = ids(split.test);
  write_text(ws.split(), j.dump() + "\n");
  out << "kept " << kept.size() << " of " << raw.size() << " trajectories (train " << split.train.size() << ", val "
      << split.val.size() << ", test " << split.test.size() << ")\n";
}

void cmd_grid(const EngineConfig& c, const Workspace& ws, std::ostream& out) {
  const auto clean = load_trajectories(ws.clean());
  std::vector<GridTrajectory> grid;
  for (const GpsTrajectory& t : clean) {
    try {
      grid.push_back(map_to_grid(t, c.grid));
    } catch (const DomainError& e) {
      throw DomainError("trajectory " + std::to_string(t.id) + ": " + e.what());
    }
  }
  save_grid(ws.grid(), grid);
  out << "mapped " << grid.size() << " trajectories at zoom " << c.grid.zoom << "\n";
}

void cmd_features(const Workspace& ws, std::ostream& out) {
  const auto clean = load_trajectories(ws.clean());
  const SplitIds split = load_split(ws);
  const NormStats norm = compute_norm_stats(select(clean, split.at("train"), "clean.csv"));
  write_text(ws.norm(), norm_stats_json(norm));
  std::string s = "traj_id,point_idx,x,y,d_prev,theta_prev,d_next,theta_next\n";
  char buf[32];
  for (const GpsTrajectory& t : clean) {
    const PointFeatureSeq f = extract_point_features(t, norm);
    for (std::size_t i = 0; i < f.size(); ++i) {
      s += std::to_string(t.id) + "," + std::to_string(i);
      for (double v : f.rows[i]) {
        std::snprintf(buf, sizeof buf, ",%.9g", v);
        s += buf;
      }
      s += "\n";
    }
  }
  write_text(ws.features(), s);
  out << "wrote features for " << clean.size() << " trajectories\n";
}

void cmd_distances(const EngineConfig& c, const Workspace& ws, Measure m, std::ostream& out) {
  const auto clean = load_trajectories(ws.clean());
  const SplitIds split = load_split(ws);
  for (const char* name : kSplits) {
    const auto lines = polylines(select(clean, split.at(name), "clean.csv"));
    if (lines.empty()) continue;
    save_distance_matrix(ws.dist(m, name), pairwise_matrix(lines, m));
    out << measure_name(m) << " " << name << ": " << lines.size() << "x" << lines.size() << "\n";
  }
  (void)c;
}

void cmd_graph(const Workspace& ws, std::ostream& out) {
  const auto grid = load_grid(ws.grid());
  const SplitIds split = load_split(ws);
  const auto train = select(grid, split.at("train"), "grid.csv");
  const CellVocab vocab(train);
  std::vector<std::vector<std::uint32_t>> seqs;
  for (const GridTrajectory& g : train) seqs.push_back(vocab.encode(g));
  const TransitionGraph graph = build_transition_graph(seqs, vocab.size());
  std::string v;
  for (std::uint64_t cell : vocab.cells()) v += std::to_string(cell) + "\n";
  write_text(ws.vocab(), v);
  std::string e = "# nodes " + std::to_string(graph.num_nodes) + "\n";
  for (std::size_t a = 0; a < graph.num_nodes; ++a) {
    for (std::uint32_t b : graph.out[a]) e += std::to_string(a) + " " + std::to_string(b) + "\n";
  }
  write_text(ws.graph(), e);
  out << "graph: " << graph.num_nodes << " cells, " << graph.num_edges() << " edges\n";
}

TransitionGraph load_graph(const Workspace& ws, std::size_t num_nodes) {
  std::istringstream in(read_text(ws.graph()));
  std::string line;
  std::vector<std::vector<std::uint32_t>> seqs;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    if (!(ls >> a >> b)) throw DomainError(ws.graph().string() + ": malformed edge line '" + line + "'");
    seqs.push_back({a, b});
  }
  return build_transition_graph(seqs, num_nodes);
}

void cmd_node2vec(const EngineConfig& c, const Workspace& ws, std::ostream& out) {
  const CellVocab vocab = load_vocab(ws);
  const TransitionGraph graph = load_graph(ws, vocab.size());
  const WalkCorpus walks = random_walks(graph, c.node2vec);
  const SkipGramResult r = train_skipgram(walks, vocab.size(), c.model.d, c.node2vec);
  EmbeddingFile f{vocab.cells(), nn::Matrix(vocab.size(), c.model.d)};
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    std::copy(r.table.rows.row(i).begin(), r.table.rows.row(i).end(), f.values.row(i).begin());
  }
  save_embeddings(ws.structural(), f);
  out << "node2vec: " << walks.size() << " walks";
  if (!r.epoch_loss.empty()) out << ", final epoch loss " << fmt(r.epoch_loss.back());
  out << "\n";
}

void cmd_visual(const EngineConfig& c, const Workspace& ws, std::ostream& out) {
  const CellVocab vocab = load_vocab(ws);
  VisualFeatures v;
  v.d = c.model.d;
  for (std::uint64_t cell : vocab.cells()) {
    const auto row = synth_visual_row(cell, c.grid.zoom, v.d, c.seed);
    v.cells.push_back(cell);
    v.vectors.emplace_back(row.begin(), row.end());
  }
  save_visual(ws.visual(), v);
  out << "visual features for " << v.cells.size() << " cells\n";
}

void cmd_train(const EngineConfig& c, const Workspace& ws, std::ostream& out) {
  const CellVocab vocab = load_vocab(ws);
  const Tables tables = load_tables(ws, vocab, c.model.d);
  const SplitIds split = load_split(ws);
  const SplitInputs train_in = split_inputs(ws, split, "train", vocab);
  const SplitInputs val = split_inputs(ws, split, "val", vocab);
  const DistanceMatrix dtrain = load_distance_matrix(ws.dist(c.measure, "train"));
  if (dtrain.n != train_in.ids.size()) throw DomainError("train: distance matrix size does not match the training split");
  std::optional<RankLists> vtruth;
  std::optional<DistanceMatrix> dval;
  if (val.ids.size() >= 2) {
    dval = load_distance_matrix(ws.dist(c.measure, "val"));
    vtruth = ground_truth_topk(*dval, 1);
  }
  const Model init = init_model(c.model, c.seed);
  const TrainData data{train_in.inputs, &dtrain, val.inputs, vtruth ? &*vtruth : nullptr};
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(init, tables.view(), data, c.train, [&](const EpochLog& e, const Model&) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "epoch " << e.epoch << " loss " << fmt(e.mean_loss, 6) << " val_HR@1 " << fmt(e.val_hr1) << " ("
        << fmt(secs, 1) << " s)\n";
    return true;
  });
  save_checkpoint(ws.model(), r.best);
  std::string steps = "step,loss\n";
  for (std::size_t i = 0; i < r.step_losses.size(); ++i) {
    steps += std::to_string(i) + "," + fmt(r.step_losses[i], 9) + "\n";
  }
  write_text(ws.loss_log(), steps);
  std::string epochs = "epoch,mean_loss,val_hr1\n";
  for (const EpochLog& e : r.epochs) {
    epochs += std::to_string(e.epoch) + "," + fmt(e.mean_loss, 9) + "," + fmt(e.val_hr1, 6) + "\n";
  }
  write_text(ws.epoch_log(), epochs);
  out << "best epoch " << r.best_epoch << ", checkpoint " << ws.model().string() << "\n";
}

void cmd_embed(const EngineConfig& c, const Workspace& ws, const Options& o, std::ostream& out) {
  const Model m = load_checkpoint(ws.model(), c.model);
  const CellVocab vocab = load_vocab(ws);
  const Tables tables = load_tables(ws, vocab, c.model.d);
  const SplitIds split = load_split(ws);
  std::vector<std::string> names;
  if (o.split == "all") {
    names.assign(std::begin(kSplits), std::end(kSplits));
  } else {
    check_split_name(o.split);
    names.push_back(o.split);
  }
  for (const std::string& name : names) {
    const SplitInputs in = split_inputs(ws, split, name, vocab);
    EmbeddingFile f{in.ids, in.inputs.empty() ? nn::Matrix(0, c.model.d) : model_forward(m, tables.view(), in.inputs)};
    save_embeddings(ws.embeddings(name), f);
    out << "embedded " << in.ids.size() << " " << name << " trajectories\n";
  }
}

void cmd_evaluate(const EngineConfig& c, const Workspace& ws, const Options& o, std::ostream& out) {
  check_split_name(o.split);
  const EmbeddingFile e = load_embeddings(ws.embeddings(o.split), c.model.d);
  const DistanceMatrix d = load_distance_matrix(ws.dist(c.measure, o.split));
  if (d.n != e.ids.size()) throw DomainError("evaluate: embeddings and distance matrix cover different sets");
  const RankLists truth = ground_truth_topk(d, c.metrics.max_k());
  std::vector<std::optional<std::uint32_t>> exclude(e.ids.size());
  for (std::size_t i = 0; i < exclude.size(); ++i) exclude[i] = static_cast<std::uint32_t>(i);
  const MetricsReport r = evaluate(e.values, e.values, truth, c.metrics, exclude);
  const std::string text = format_metrics_text(r);
  write_text(ws.metrics_txt(), text);
  write_text(ws.metrics_json(), format_metrics_json(r));
  out << text;
}

struct Retrieved {
  std::vector<GeoResult> results;
  std::size_t query = 0;
  std::vector<std::uint64_t> ids;
};

Retrieved retrieve(const EngineConfig& c, const Workspace& ws, const Options& o) {
  check_split_name(o.split);
  if (o.k == 0) throw UsageError("-k must be positive");
  const EmbeddingFile e = load_embeddings(ws.embeddings(o.split), c.model.d);
  const auto it = std::find(e.ids.begin(), e.ids.end(), o.query_id);
  if (it == e.ids.end()) {
    throw DomainError("query id " + std::to_string(o.query_id) + " is not in the " + o.split + " split");
  }
  const auto qi = static_cast<std::size_t>(it - e.ids.begin());
  nn::Matrix q(1, e.values.cols);
  std::copy(e.values.row(qi).begin(), e.values.row(qi).end(), q.data.begin());
  const RankLists ranks = rank_by_cosine(q, e.values, {static_cast<std::uint32_t>(qi)});
  Retrieved r{{}, qi, e.ids};
  for (std::size_t j = 0; j < std::min(o.k, ranks.lists[0].size()); ++j) {
    const std::uint32_t cand = ranks.lists[0][j];
    double dot = 0.0;
    for (std::size_t t = 0; t < q.cols; ++t) dot += q.data[t] * e.values(cand, t);
    r.results.push_back({e.ids[cand], j + 1, dot});
  }
  return r;
}

void cmd_search(const EngineConfig& c, const Workspace& ws, const Options& o, std::ostream& out) {
  const Retrieved r = retrieve(c, ws, o);
  out << "rank,traj_id,cosine\n";
  for (const GeoResult& g : r.results) out << g.rank << "," << g.id << "," << fmt(g.distance, 6) << "\n";
}

void cmd_export(const EngineConfig& c, const Workspace& ws, const Options& o, std::ostream& out) {
  Retrieved r = retrieve(c, ws, o);
  const auto clean = load_trajectories(ws.clean());
  const auto query = select(clean, {o.query_id}, "clean.csv").front();
  const Polyline qline = project(query);
  for (GeoResult& g : r.results) {
    const auto t = select(clean, {g.id}, "clean.csv").front();
    g.distance = measure_distance(c.measure, qline, project(t));
  }
  const fs::path path = o.out.empty() ? ws.dir / ("retrieval_" + std::to_string(o.query_id) + ".geojson") : fs::path(o.out);
  write_text(path, geojson_retrieval(query, clean, r.results));
  out << "wrote " << r.results.size() + 1 << " features to " << path.string() << "\n";
}

bool cmd_gradcheck(const EngineConfig& c, const Options& o, std::ostream& out) {
  GradCheckOptions opt;
  opt.seed = c.seed;
  opt.eps = o.eps;
  opt.max_entries = o.max_entries;
  opt.model = c.model;
  std::vector<std::string> blocks;
  if (o.block == "all") {
    blocks = gradcheck_blocks();
  } else {
    const auto known = gradcheck_blocks();
    if (std::find(known.begin(), known.end(), o.block) == known.end()) {
      throw UsageError("unknown block '" + o.block + "'");
    }
    blocks.push_back(o.block);
  }
  bool ok = true;
  for (const std::string& b : blocks) {
    const GradCheckResult r = grad_check(b, opt);
    const bool pass = r.max_rel_err < 1e-4;
    ok = ok && pass;
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_rel_err;
    out << b << " max_rel_err=" << err.str() << " checked=" << r.checked << " worst=" << r.worst
        << (pass ? " PASS" : " FAIL") << "\n";
  }
  return ok;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory similarity pipeline", "trajsim"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "Override the master seed");
    sub->add_option("--data", o.data, "Override the raw trajectory CSV path");
    sub->add_option("--artifacts", o.artifacts, "Override the artifacts directory");
    return sub;
  };
  auto* gen = common(app.add_subcommand("gen", "Generate synthetic trajectories"));
  gen->add_option("--count", o.count, "Number of trajectories");
  gen->add_option("--out", o.out, "Output CSV (default: config data path)");
  common(app.add_subcommand("clean", "Clean raw trajectories and split the dataset"));
  common(app.add_subcommand("grid", "Map cleaned trajectories to grid cells"));
  common(app.add_subcommand("features", "Compute normalization stats and point features"));
  auto* dist = common(app.add_subcommand("distances", "Ground-truth distance matrices per split"));
  dist->add_option("--measure", o.measure, "dtw, dfd or edwp");
  common(app.add_subcommand("graph", "Build the cell vocabulary and transition graph"));
  common(app.add_subcommand("node2vec", "Train structural cell embeddings"));
  common(app.add_subcommand("visual-synth", "Write synthetic per-cell visual features"));
  auto* tr = common(app.add_subcommand("train", "Train the encoder"));
  tr->add_option("--epochs", o.epochs, "Override training epochs");
  tr->add_option("--lr", o.lr, "Override the learning rate");
  auto* emb = common(app.add_subcommand("embed", "Embed a split with the trained model"));
  emb->add_option("--split", o.split, "train, val, test or all");
  auto* ev = common(app.add_subcommand("evaluate", "Retrieval metrics against ground truth"));
  ev->add_option("--split", o.split, "train, val or test");
  for (const char* name : {"search", "export-geojson"}) {
    auto* s = common(app.add_subcommand(name, name == std::string("search") ? "Nearest trajectories by embedding"
                                                                            : "Write a query and its results as GeoJSON"));
    s->add_option("--query-id", o.query_id, "Query trajectory id")->required();
    s->add_option("-k,--top-k", o.k, "Number of results");
    s->add_option("--split", o.split, "Split searched (default test)");
    if (name == std::string("export-geojson")) s->add_option("--out", o.out, "Output path");
  }
  auto* gc = common(app.add_subcommand("gradcheck", "Finite-difference gradient checks"));
  gc->add_option("--block", o.block, "Block name or all");
  gc->add_option("--eps", o.eps, "Central difference step");
  gc->add_option("--max-entries", o.max_entries, "Sampled entries per block");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << "\n" << app.help();
    return 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    apply_thread_env();
    EngineConfig c = o.config.empty() ? EngineConfig{} : load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.data) c.data = *o.data;
    if (o.artifacts) c.artifacts = *o.artifacts;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.lr) c.train.learning_rate = *o.lr;
    if (o.measure) c.measure = parse_measure(*o.measure);
    c.finalize();
    const Workspace ws{c.artifacts};

    if (cmd == "gen") cmd_gen(c, o, out);
    else if (cmd == "clean") cmd_clean(c, ws, out);
    else if (cmd == "grid") cmd_grid(c, ws, out);
    else if (cmd == "features") cmd_features(ws, out);
    else if (cmd == "distances") cmd_distances(c, ws, c.measure, out);
    else if (cmd == "graph") cmd_graph(ws, out);
    else if (cmd == "node2vec") cmd_node2vec(c, ws, out);
    else if (cmd == "visual-synth") cmd_visual(c, ws, out);
    else if (cmd == "train") cmd_train(c, ws, out);
    else if (cmd == "embed") cmd_embed(c, ws, o, out);
    else if (cmd == "evaluate") cmd_evaluate(c, ws, o, out);
    else if (cmd == "search") cmd_search(c, ws, o, out);
    else if (cmd == "export-geojson") cmd_export(c, ws, o, out);
    else if (cmd == "gradcheck") return cmd_gradcheck(c, o, out) ? 0 : 1;
    return 0;
  } catch (const UsageError& e) {
    err << "error: UsageError: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "error: FormatError: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    err << "error: DomainError: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace trajsim
