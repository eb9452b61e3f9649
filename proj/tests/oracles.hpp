#ifndef TRAJSIM_TESTS_ORACLES_HPP_
#define TRAJSIM_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "trajsim/distance.hpp"

namespace trajsim::testing {

inline double pt_dist(MeterXY a, MeterXY b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Top-down memoized recursion over prefix pairs (i, j).
inline double dtw_recursive(const Polyline& a, const Polyline& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> memo;
  std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) -> double {
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const double d = pt_dist(a[i], b[j]);
    double v;
    if (i == 0 && j == 0) {
      v = d;
    } else if (i == 0) {
      v = d + rec(0, j - 1);
    } else if (j == 0) {
      v = d + rec(i - 1, 0);
    } else {
      v = d + std::min({rec(i - 1, j), rec(i, j - 1), rec(i - 1, j - 1)});
    }
    memo[key] = v;
    return v;
  };
  return rec(a.size() - 1, b.size() - 1);
}

inline double dfd_recursive(const Polyline& a, const Polyline& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> memo;
  std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) -> double {
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const double d = pt_dist(a[i], b[j]);
    double v;
    if (i == 0 && j == 0) {
      v = d;
    } else if (i == 0) {
      v = std::max(d, rec(0, j - 1));
    } else if (j == 0) {
      v = std::max(d, rec(i - 1, 0));
    } else {
      v = std::max(d, std::min({rec(i - 1, j), rec(i, j - 1), rec(i - 1, j - 1)}));
    }
    memo[key] = v;
    return v;
  };
  return rec(a.size() - 1, b.size() - 1);
}

// Exhaustive EDwP search over the recurrence tree, carrying the remaining
// polylines explicitly. An insertion projects the other side's next vertex
// onto the current head segment (clamped) and splits that segment there.
inline double edwp_tree(const Polyline& a, const Polyline& b) {
  const auto seg_cost = [](MeterXY s1, MeterXY e1, MeterXY s2, MeterXY e2) {
    return (pt_dist(s1, s2) + pt_dist(e1, e2)) * (pt_dist(s1, e1) + pt_dist(s2, e2));
  };
  const auto proj = [](MeterXY s, MeterXY e, MeterXY p) {
    const double dx = e.x - s.x;
    const double dy = e.y - s.y;
    const double l2 = dx * dx + dy * dy;
    const double t = l2 == 0.0 ? 0.0 : std::clamp(((p.x - s.x) * dx + (p.y - s.y) * dy) / l2, 0.0, 1.0);
    return MeterXY{s.x + t * dx, s.y + t * dy};
  };
  std::function<double(const Polyline&, const Polyline&)> rec = [&](const Polyline& x, const Polyline& y) -> double {
    if (x.size() == 1 && y.size() == 1) return 0.0;
    if (x.size() == 1 || y.size() == 1) return std::numeric_limits<double>::infinity();
    const Polyline xt(x.begin() + 1, x.end());
    const Polyline yt(y.begin() + 1, y.end());
    double best = seg_cost(x[0], x[1], y[0], y[1]) + rec(xt, yt);
    const MeterXY p = proj(x[0], x[1], y[1]);
    Polyline xs = xt;
    xs.insert(xs.begin(), p);
    best = std::min(best, seg_cost(x[0], p, y[0], y[1]) + rec(xs, yt));
    const MeterXY q = proj(y[0], y[1], x[1]);
    Polyline ys = yt;
    ys.insert(ys.begin(), q);
    best = std::min(best, seg_cost(x[0], x[1], y[0], q) + rec(xt, ys));
    return best;
  };
  return rec(a, b);
}

}  // namespace trajsim::testing

#endif  // TRAJSIM_TESTS_ORACLES_HPP_
