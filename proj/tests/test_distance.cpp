#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "trajsim/distance.hpp"
#include "trajsim/error.hpp"

using namespace trajsim;

namespace {

Polyline random_line(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  Polyline p(len(rng));
  for (auto& q : p) q = {u(rng), u(rng)};
  return p;
}

}  // namespace

TEST_CASE("dtw and dfd on small hand examples") {
  const Polyline a{{0, 0}, {1, 0}, {2, 0}};
  const Polyline b{{0, 1}, {2, 1}};
  // Best warping path: (0,0)(1,0)(2,1) -> 1 + sqrt(2) + 1
  CHECK(dtw(a, b) == doctest::Approx(2.0 + std::sqrt(2.0)));
  CHECK(dfd(a, b) == doctest::Approx(std::sqrt(2.0)));
  const Polyline single{{3, 4}};
  CHECK(dtw(single, Polyline{{0, 0}, {0, 0}}) == doctest::Approx(10.0));
  CHECK(dfd(single, Polyline{{0, 0}, {6, 8}}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(dtw(Polyline{}, a), DomainError);
  CHECK_THROWS_AS(dfd(a, Polyline{}), DomainError);
}

TEST_CASE("edwp on parallel segments") {
  const Polyline a{{0, 0}, {10, 0}};
  const Polyline b{{0, 1}, {10, 1}};
  CHECK(edwp(a, b) == doctest::Approx(40.0));
  // A midpoint vertex on one side is absorbed by one insertion.
  const Polyline c{{0, 1}, {5, 1}, {10, 1}};
  CHECK(edwp(a, c) == doctest::Approx(40.0));
  CHECK(testing::edwp_tree(a, c) == doctest::Approx(40.0));
  CHECK_THROWS_AS(edwp(Polyline{{0, 0}}, a), DomainError);
}

TEST_CASE("dp kernels agree with recursive references") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const Polyline a = random_line(rng, 2, 6);
    const Polyline b = random_line(rng, 2, 6);
    CHECK(dtw(a, b) == testing::dtw_recursive(a, b));
    CHECK(dfd(a, b) == testing::dfd_recursive(a, b));
    const double e = edwp(a, b);
    const double r = testing::edwp_tree(a, b);
    CHECK(std::abs(e - r) <= 1e-9 * std::max(1.0, std::abs(r)));
  }
}

TEST_CASE("measures are zero on identical input and symmetric") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const Polyline a = random_line(rng, 2, 12);
    const Polyline b = random_line(rng, 2, 12);
    for (Measure m : {Measure::kDtw, Measure::kDfd, Measure::kEdwp}) {
      CHECK(measure_distance(m, a, a) == 0.0);
      const double ab = measure_distance(m, a, b);
      const double ba = measure_distance(m, b, a);
      CHECK(ab >= 0.0);
      CHECK(std::abs(ab - ba) <= 1e-9 * std::max(1.0, ab));
    }
  }
}

TEST_CASE("measure names parse back") {
  for (Measure m : {Measure::kDtw, Measure::kDfd, Measure::kEdwp}) CHECK(parse_measure(measure_name(m)) == m);
  CHECK_THROWS_AS(parse_measure("lcss"), DomainError);
}

TEST_CASE("parallel matrix is byte-identical to the serial reference") {
  std::mt19937_64 rng(21);
  std::vector<Polyline> set;
  for (int i = 0; i < 25; ++i) set.push_back(random_line(rng, 2, 15));
  for (Measure m : {Measure::kDtw, Measure::kDfd, Measure::kEdwp}) {
    const DistanceMatrix ref = pairwise_matrix_serial(set, m);
    CHECK(ref.n == 25);
    for (std::size_t i = 0; i < ref.n; ++i) {
      CHECK(ref.at(i, i) == 0.0f);
      for (std::size_t j = 0; j < ref.n; ++j) CHECK(ref.at(i, j) == ref.at(j, i));
    }
    CHECK(ref.at(2, 7) == static_cast<float>(measure_distance(m, set[2], set[7])));
    for (int threads : {1, 2, 3, 8}) {
      const DistanceMatrix par = pairwise_matrix(set, m, threads);
      REQUIRE(par.values.size() == ref.values.size());
      CHECK(std::memcmp(par.values.data(), ref.values.data(), ref.values.size() * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("matrix errors name the offending pair") {
  std::vector<Polyline> set{{{0, 0}, {1, 1}}, {{0, 0}}, {{2, 2}, {3, 3}}};
  CHECK_THROWS_WITH_AS(pairwise_matrix(set, Measure::kEdwp), doctest::Contains("pair (0, 1)"), DomainError);
  CHECK_THROWS_WITH_AS(pairwise_matrix_serial(set, Measure::kEdwp), doctest::Contains("pair (0, 1)"), DomainError);
  CHECK_THROWS_AS(pairwise_matrix(std::vector<Polyline>{}, Measure::kDtw), DomainError);
}

TEST_CASE("ground truth top-k breaks ties by index") {
  DistanceMatrix d{Measure::kDtw, 4, {0, 2, 1, 2,  //
                                      2, 0, 3, 3,  //
                                      1, 3, 0, 1,  //
                                      2, 3, 1, 0}};
  const RankLists r = ground_truth_topk(d, 3);
  CHECK(r.k == 3);
  CHECK(r.lists[0] == std::vector<std::uint32_t>{2, 1, 3});
  CHECK(r.lists[1] == std::vector<std::uint32_t>{0, 2, 3});
  CHECK(r.lists[2] == std::vector<std::uint32_t>{0, 3, 1});
  CHECK(r.lists[3] == std::vector<std::uint32_t>{2, 0, 1});
  CHECK_THROWS_AS(ground_truth_topk(d, 4), DomainError);
  CHECK_THROWS_AS(ground_truth_topk(d, 0), DomainError);
}

TEST_CASE("worked examples") {
  const Polyline a{{0, 0}, {2, 0}};
  const Polyline b{{0, 0}, {1, 0}, {2, 0}};
  CHECK(dtw(a, b) == 1.0);
  CHECK(dfd(a, b) == 1.0);
  CHECK(dtw(Polyline{{0, 0}}, Polyline{{3, 4}}) == 5.0);
  CHECK(edwp(Polyline{{0, 0}, {1, 0}}, Polyline{{0, 1}, {1, 1}}) == 4.0);
  CHECK(testing::edwp_tree(Polyline{{0, 0}, {1, 0}}, Polyline{{0, 1}, {1, 1}}) == 4.0);
  const Polyline one{{1, 1}, {2, 2}};
  const DistanceMatrix m1 = pairwise_matrix(std::vector<Polyline>{one}, Measure::kDtw);
  CHECK(m1.n == 1);
  CHECK(m1.values == std::vector<float>{0.0f});
}

TEST_CASE("dfd is bounded below by the directed hausdorff distance") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Polyline a = random_line(rng, 1, 10);
    const Polyline b = random_line(rng, 1, 10);
    double h = 0;
    for (const MeterXY& p : a) {
      double best = 1e300;
      for (const MeterXY& q : b) best = std::min(best, testing::pt_dist(p, q));
      h = std::max(h, best);
    }
    CHECK(dfd(a, b) >= h);
  }
}

TEST_CASE("dtw never exceeds the cost of a fixed warping path") {
  std::mt19937_64 rng(32);
  const Polyline a = random_line(rng, 8, 8);
  const Polyline b = random_line(rng, 6, 6);
  const double best = dtw(a, b);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t i = 0, j = 0;
    double cost = testing::pt_dist(a[0], b[0]);
    while (i + 1 < a.size() || j + 1 < b.size()) {
      const bool can_i = i + 1 < a.size(), can_j = j + 1 < b.size();
      if (can_i && can_j && coin(rng)) {
        ++i;
        ++j;
      } else if (can_i && (!can_j || coin(rng))) {
        ++i;
      } else {
        ++j;
      }
      cost += testing::pt_dist(a[i], b[j]);
    }
    CHECK(best <= cost);
  }
}

TEST_CASE("top-k lists match a full sort and handle ties") {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> val(1, 6);
  const std::size_t n = 12;
  DistanceMatrix d{Measure::kDfd, n, std::vector<float>(n * n, 0.0f)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d.values[i * n + j] = d.values[j * n + i] = static_cast<float>(val(rng));
  }
  const RankLists r = ground_truth_topk(d, n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> all;
    for (std::uint32_t j = 0; j < n; ++j) {
      if (j != i) all.push_back(j);
    }
    std::stable_sort(all.begin(), all.end(), [&](auto x, auto y) { return d.at(i, x) < d.at(i, y); });
    CHECK(r.lists[i] == all);
  }
  DistanceMatrix two{Measure::kDtw, 2, {0, 3, 3, 0}};
  CHECK(ground_truth_topk(two, 1).lists == std::vector<std::vector<std::uint32_t>>{{1}, {0}});
  DistanceMatrix flat{Measure::kDtw, 4, std::vector<float>(16, 1.0f)};
  for (std::size_t i = 0; i < 4; ++i) flat.values[i * 5] = 0.0f;
  CHECK(ground_truth_topk(flat, 3).lists[2] == std::vector<std::uint32_t>{0, 1, 3});
}
