// Serial reference vs OpenMP kernels: pairwise distance matrices and the batched encoder.
// Usage: bench_kernels [trajectories] [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "trajsim/distance.hpp"
#include "trajsim/features.hpp"
#include "trajsim/grid.hpp"
#include "trajsim/model.hpp"
#include "trajsim/region.hpp"
#include "trajsim/synthetic.hpp"

using namespace trajsim;

namespace {

template <typename F>
double best_seconds(int repeats, F f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 150;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 2;
  const int max_threads = omp_get_max_threads();

  GeneratorConfig g;
  g.count = n;
  std::vector<GpsTrajectory> trajs;
  for (const GpsTrajectory& t : generate_synthetic(g, 0)) {
    if (auto c = clean_trajectory(t.id, t.points, CleanConfig{})) trajs.push_back(std::move(*c));
  }
  std::vector<Polyline> lines;
  for (const GpsTrajectory& t : trajs) lines.push_back(project(t));
  std::printf("%zu trajectories, %d hardware threads, best of %d\n\n", trajs.size(), max_threads, repeats);

  std::printf("%-10s %-8s %10s %10s %8s %s\n", "kernel", "threads", "serial_s", "omp_s", "speedup", "identical");
  for (Measure m : {Measure::kDtw, Measure::kDfd, Measure::kEdwp}) {
    DistanceMatrix ref;
    const double ts = best_seconds(repeats, [&] { ref = pairwise_matrix_serial(lines, m); });
    for (int threads = 1; threads <= max_threads; threads *= 2) {
      DistanceMatrix par;
      const double tp = best_seconds(repeats, [&] { par = pairwise_matrix(lines, m, threads); });
      std::printf("%-10s %-8d %10.4f %10.4f %8.2f %s\n", std::string(measure_name(m)).c_str(), threads, ts, tp,
                  ts / tp, par.values == ref.values ? "yes" : "NO");
    }
  }

  std::vector<GridTrajectory> cells;
  for (const GpsTrajectory& t : trajs) cells.push_back(map_to_grid(t, GridSpec{}));
  const CellVocab vocab(cells);
  const NormStats norm = compute_norm_stats(trajs);
  ModelConfig mc;
  const EmbeddingTable structural = skipgram_init(vocab.size(), mc.d, 1);
  const EmbeddingTable visual = synth_visual_table(vocab, GridSpec{}.zoom, mc.d, 1);
  const RegionTables tables{&structural, &visual};
  std::vector<EncoderInput> inputs;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    inputs.push_back(make_input(vocab.encode(cells[i]), extract_point_features(trajs[i], norm)));
  }
  const Model model = init_model(mc, 0);
  nn::Matrix ref;
  const double ts = best_seconds(repeats, [&] { ref = model_forward_serial(model, tables, inputs); });
  for (int threads = 1; threads <= max_threads; threads *= 2) {
    omp_set_num_threads(threads);
    nn::Matrix par;
    const double tp = best_seconds(repeats, [&] { par = model_forward(model, tables, inputs); });
    std::printf("%-10s %-8d %10.4f %10.4f %8.2f %s\n", "forward", threads, ts, tp, ts / tp,
                par.data == ref.data ? "yes" : "NO");
  }
  omp_set_num_threads(max_threads);
  return 0;
}
