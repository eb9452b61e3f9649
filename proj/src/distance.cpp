#include "trajsim/distance.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "trajsim/error.hpp"

namespace trajsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonempty(std::span<const MeterXY> a, std::span<const MeterXY> b, const char* what) {
  if (a.empty() || b.empty()) throw DomainError(std::string(what) + ": empty trajectory");
}

// Clamped parameter of the orthogonal projection of p onto segment [s, e].
double project_param(MeterXY s, MeterXY e, MeterXY p) {
  const double dx = e.x - s.x;
  const double dy = e.y - s.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return 0.0;
  return std::clamp(((p.x - s.x) * dx + (p.y - s.y) * dy) / len2, 0.0, 1.0);
}

MeterXY point_at(MeterXY s, MeterXY e, double t) { return {s.x + t * (e.x - s.x), s.y + t * (e.y - s.y)}; }

double match_cost(MeterXY s1, MeterXY e1, MeterXY s2, MeterXY e2) {
  const double rep = planar_distance(s1, s2) + planar_distance(e1, e2);
  const double coverage = planar_distance(s1, e1) + planar_distance(s2, e2);
  return rep * coverage;
}

}  // namespace

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::kDtw: return "dtw";
    case Measure::kDfd: return "dfd";
    case Measure::kEdwp: return "edwp";
  }
  return "unknown";
}

Measure parse_measure(std::string_view name) {
  if (name == "dtw" || name == "DTW") return Measure::kDtw;
  if (name == "dfd" || name == "DFD") return Measure::kDfd;
  if (name == "edwp" || name == "EDWP" || name == "EDwP") return Measure::kEdwp;
  throw DomainError("unknown measure '" + std::string(name) + "'");
}

double dtw(std::span<const MeterXY> a, std::span<const MeterXY> b) {
  require_nonempty(a, b, "dtw");
  const std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = planar_distance(a[i], b[j]);
      if (i == 0 && j == 0) {
        cur[j] = d;
      } else if (i == 0) {
        cur[j] = d + cur[j - 1];
      } else if (j == 0) {
        cur[j] = d + prev[j];
      } else {
        cur[j] = d + std::min({prev[j], cur[j - 1], prev[j - 1]});
      }
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double dfd(std::span<const MeterXY> a, std::span<const MeterXY> b) {
  require_nonempty(a, b, "dfd");
  const std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = planar_distance(a[i], b[j]);
      if (i == 0 && j == 0) {
        cur[j] = d;
      } else if (i == 0) {
        cur[j] = std::max(d, cur[j - 1]);
      } else if (j == 0) {
        cur[j] = std::max(d, prev[j]);
      } else {
        cur[j] = std::max(d, std::min({prev[j], cur[j - 1], prev[j - 1]}));
      }
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double edwp(std::span<const MeterXY> a, std::span<const MeterXY> b) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("edwp: need at least 2 points per trajectory");
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();

  // State (i, j, slot): a's head segment is [sa, a[i+1]], b's is [sb, b[j+1]].
  //   slot 0          sa = a[i], sb = b[j]
  //   slot 1 + k      sa = projection of b[k] onto a-segment i, sb = b[j]
  //   slot 1 + n2 + k sb = projection of a[k] onto b-segment j, sa = a[i]
  const std::size_t slots = 1 + n2 + n1;
  std::vector<double> next(n2 * slots, kInf);  // layer i + 1
  std::vector<double> cur(n2 * slots, kInf);   // layer i
  const auto at = [slots](std::vector<double>& layer, std::size_t j, std::size_t slot) -> double& {
    return layer[j * slots + slot];
  };

  for (std::size_t ii = n1; ii-- > 0;) {
    for (std::size_t jj = n2; jj-- > 0;) {
      const bool a_done = ii == n1 - 1;
      const bool b_done = jj == n2 - 1;
      if (a_done || b_done) {
        const double v = (a_done && b_done) ? 0.0 : kInf;
        for (std::size_t s = 0; s < slots; ++s) at(cur, jj, s) = v;
        continue;
      }
      const MeterXY a_end = a[ii + 1];
      const MeterXY b_end = b[jj + 1];
      const double t_bnext = project_param(a[ii], a_end, b_end);   // b[j+1] onto a-seg i
      const double t_anext = project_param(b[jj], b_end, a_end);   // a[i+1] onto b-seg j

      for (std::size_t s = 0; s < slots; ++s) {
        double ta = 0.0;
        double tb = 0.0;
        std::size_t src_a = 0;  // meaningful when the a-side start is projected
        std::size_t src_b = 0;
        bool proj_a = false;
        bool proj_b = false;
        if (s >= 1 && s < 1 + n2) {
          src_a = s - 1;
          if (src_a > jj) continue;
          proj_a = true;
          ta = project_param(a[ii], a_end, b[src_a]);
        } else if (s >= 1 + n2) {
          src_b = s - 1 - n2;
          if (src_b > ii) continue;
          proj_b = true;
          tb = project_param(b[jj], b_end, a[src_b]);
        }
        const MeterXY sa = proj_a ? point_at(a[ii], a_end, ta) : a[ii];
        const MeterXY sb = proj_b ? point_at(b[jj], b_end, tb) : b[jj];

        double best = match_cost(sa, a_end, sb, b_end) + at(next, jj + 1, 0);

        // Insert on a: split a's head at the projection of b[j+1].
        {
          const bool advance = !proj_a || t_bnext >= ta;
          const double t = advance ? t_bnext : ta;
          const std::size_t src = advance ? jj + 1 : src_a;
          const MeterXY p = point_at(a[ii], a_end, t);
          const double v = match_cost(sa, p, sb, b_end) + at(cur, jj + 1, 1 + src);
          best = std::min(best, v);
        }
        // Insert on b: split b's head at the projection of a[i+1].
        {
          const bool advance = !proj_b || t_anext >= tb;
          const double t = advance ? t_anext : tb;
          const std::size_t src = advance ? ii + 1 : src_b;
          const MeterXY q = point_at(b[jj], b_end, t);
          const double v = match_cost(sa, a_end, sb, q) + at(next, jj, 1 + n2 + src);
          best = std::min(best, v);
        }
        at(cur, jj, s) = best;
      }
    }
    std::swap(cur, next);
  }
  return at(next, 0, 0);
}

double measure_distance(Measure m, std::span<const MeterXY> a, std::span<const MeterXY> b) {
  switch (m) {
    case Measure::kDtw: return dtw(a, b);
    case Measure::kDfd: return dfd(a, b);
    case Measure::kEdwp: return edwp(a, b);
  }
  throw DomainError("unknown measure");
}

namespace {

void check_set(std::span<const Polyline> set) {
  if (set.empty()) throw DomainError("pairwise_matrix: empty trajectory set");
}

[[noreturn]] void rethrow_pair(std::size_t i, std::size_t j, const std::string& what) {
  throw DomainError("pairwise_matrix: pair (" + std::to_string(i) + ", " + std::to_string(j) +
                    "): " + what);
}

}  // namespace

DistanceMatrix pairwise_matrix(std::span<const Polyline> set, Measure m, int threads) {
  check_set(set);
  const std::size_t n = set.size();
  DistanceMatrix out{m, n, std::vector<float>(n * n, 0.0f)};
  struct PairError {
    std::size_t j;
    std::string what;
  };
  std::vector<std::optional<PairError>> errors(n);

  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(nthreads)
  for (std::ptrdiff_t si = 0; si < rows; ++si) {
    const auto i = static_cast<std::size_t>(si);
    for (std::size_t j = i + 1; j < n; ++j) {
      try {
        const auto v = static_cast<float>(measure_distance(m, set[i], set[j]));
        out.values[i * n + j] = v;
        out.values[j * n + i] = v;
      } catch (const std::exception& e) {
        errors[i] = PairError{j, e.what()};
        break;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_pair(i, errors[i]->j, errors[i]->what);
  }
  return out;
}

DistanceMatrix pairwise_matrix_serial(std::span<const Polyline> set, Measure m) {
  check_set(set);
  const std::size_t n = set.size();
  DistanceMatrix out{m, n, std::vector<float>(n * n, 0.0f)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      try {
        const auto v = static_cast<float>(measure_distance(m, set[i], set[j]));
        out.values[i * n + j] = v;
        out.values[j * n + i] = v;
      } catch (const std::exception& e) {
        rethrow_pair(i, j, e.what());
      }
    }
  }
  return out;
}

RankLists ground_truth_topk(const DistanceMatrix& d, std::size_t k_max) {
  if (k_max == 0) throw DomainError("ground_truth_topk: K_max must be positive");
  if (d.n < 2 || k_max > d.n - 1) throw DomainError("ground_truth_topk: K_max exceeds n - 1");
  RankLists out;
  out.k = k_max;
  out.lists.resize(d.n);
  const auto n = static_cast<std::ptrdiff_t>(d.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < n; ++si) {
    const auto i = static_cast<std::size_t>(si);
    std::vector<std::uint32_t> cand;
    cand.reserve(d.n - 1);
    for (std::size_t j = 0; j < d.n; ++j) {
      if (j != i) cand.push_back(static_cast<std::uint32_t>(j));
    }
    const auto row = d.row(i);
    const auto less = [&row](std::uint32_t x, std::uint32_t y) {
      return row[x] < row[y] || (row[x] == row[y] && x < y);
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k_max), cand.end(), less);
    cand.resize(k_max);
    out.lists[i] = std::move(cand);
  }
  return out;
}

}  // namespace trajsim
