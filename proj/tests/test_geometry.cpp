#include "npmix/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "doctest.h"
#include "npmix/errors.hpp"
#include "npmix/rngdist.hpp"

using namespace npmix;

namespace {

FiniteSupportSet set1(std::vector<double> pts) {
  return FiniteSupportSet(pts);
}

Eigen::VectorXd vec2(double x, double y) {
  Eigen::VectorXd v(2);
  v << x, y;
  return v;
}

// Canonical form of a partition for comparisons: sorted list of sorted
// per-component point lists (1-D only).
std::set<std::vector<double>> partition_key(
    const std::vector<FiniteSupportSet>& comps) {
  std::set<std::vector<double>> key;
  for (const auto& c : comps) {
    std::vector<double> pts;
    for (const auto& p : c.points()) pts.push_back(p(0));
    std::sort(pts.begin(), pts.end());
    key.insert(pts);
  }
  return key;
}

// Brute-force single-linkage oracle: union points whose distance is below
// the gap, then read off the connected classes.
std::set<std::vector<double>> brute_force_components(
    const std::vector<double>& pts, double gap) {
  const int n = (int)pts.size();
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::fabs(pts[i] - pts[j]) < gap) parent[find(i)] = find(j);
    }
  }
  std::vector<std::vector<double>> groups(n);
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(pts[i]);
  std::set<std::vector<double>> key;
  for (auto& g : groups) {
    if (g.empty()) continue;
    std::sort(g.begin(), g.end());
    key.insert(g);
  }
  return key;
}

}  // namespace

TEST_CASE("d_c minimum pairwise distance") {
  CHECK(d_c(set1({0.0, 1.0}), set1({2.0, 3.0})) == doctest::Approx(1.0));
  CHECK(d_c(FiniteSupportSet({vec2(0, 0)}), FiniteSupportSet({vec2(3, 4)})) ==
        doctest::Approx(5.0));
  const auto a = set1({0.0, 1.0});
  CHECK(d_c(a, a) == doctest::Approx(0.0));
  // Symmetry.
  const auto b = set1({2.5, 7.0});
  CHECK(d_c(a, b) == doctest::Approx(d_c(b, a)));
}

TEST_CASE("support sets merge duplicate points") {
  const auto s = set1({0.0, 1e-12, 5.0});
  CHECK(s.size() == 2);
  CHECK_THROWS_AS(FiniteSupportSet(std::vector<Eigen::VectorXd>{}),
                  InvalidArgumentError);
}

TEST_CASE("connected components via single linkage") {
  const auto two = connected_components(set1({0.0, 0.1, 5.0, 5.1}), 1.0);
  CHECK(partition_key(two) ==
        std::set<std::vector<double>>{{0.0, 0.1}, {5.0, 5.1}});

  CHECK(connected_components(set1({0.0}), 10.0).size() == 1);

  // A chain 0-1-2-3 with gap 1.5 stays together.
  CHECK(connected_components(set1({0.0, 1.0, 2.0, 3.0}), 1.5).size() == 1);
}

TEST_CASE("connected components match a brute-force oracle") {
  RngStream rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + (int)(rng.uniform() * 18.0);
    std::vector<double> pts(n);
    for (auto& p : pts) p = rng.uniform(0.0, 10.0);
    const double gap = rng.uniform(0.2, 3.0);
    const auto got = partition_key(connected_components(set1(pts), gap));
    CHECK(got == brute_force_components(pts, gap));

    // Permutation invariance.
    std::vector<double> shuffled = pts;
    for (int i = n - 1; i > 0; --i) {
      std::swap(shuffled[i], shuffled[(int)(rng.uniform() * (i + 1))]);
    }
    CHECK(partition_key(connected_components(set1(shuffled), gap)) == got);
  }
}

TEST_CASE("neighbor pairs exclude dominated pairs") {
  const std::vector<FiniteSupportSet> comps = {
      set1({0.0, 1.0}), set1({2.0, 3.0}), set1({7.0, 8.0})};
  auto pairs = neighbor_pairs(comps);
  std::set<std::pair<int, int>> got(pairs.begin(), pairs.end());
  // (0,2) is excluded: the middle component is strictly closer to both.
  CHECK(got == std::set<std::pair<int, int>>{{0, 1}, {1, 2}});

  const std::vector<FiniteSupportSet> two = {set1({0.0}), set1({4.0})};
  CHECK(neighbor_pairs(two).size() == 1);
  const std::vector<FiniteSupportSet> one = {set1({0.0})};
  CHECK(neighbor_pairs(one).empty());
}

TEST_CASE("within-support distance d_w") {
  // Components {0,1}, {2,3}, {7,8}: neighbor distances 1 and 4.
  CHECK(d_w(set1({0.0, 1.0, 2.0, 3.0, 7.0, 8.0}), 1.5) ==
        doctest::Approx(4.0));
  CHECK(d_w(set1({0.0, 0.5, 1.0}), 2.0) == doctest::Approx(0.0));
  CHECK(d_w(set1({0.0, 2.0}), 1.0) == doctest::Approx(2.0));
}

TEST_CASE("between-support distance d_b") {
  CHECK(d_b(set1({0.0, 1.0}), set1({5.0, 9.0})) == doctest::Approx(4.0));
  CHECK(d_b(set1({0.0, 1.0}), set1({1.0, 2.0})) == doctest::Approx(0.0));
  CHECK(d_b(FiniteSupportSet({vec2(0, 0)}), FiniteSupportSet({vec2(0, 3)})) ==
        doctest::Approx(3.0));
}

TEST_CASE("separation condition") {
  const auto ok = check_separation_C2(
      {set1({-3.1, -2.9}), set1({2.9, 3.1})}, 1.0);
  CHECK(ok.satisfied);
  CHECK(ok.max_d_w == doctest::Approx(0.0));
  CHECK(ok.min_d_b == doctest::Approx(5.8));

  const auto bad = check_separation_C2({set1({0.0, 2.0}), set1({3.0, 5.0})},
                                       1.5);
  CHECK_FALSE(bad.satisfied);
  CHECK(bad.max_d_w == doctest::Approx(2.0));
  CHECK(bad.min_d_b == doctest::Approx(1.0));

  const auto single = check_separation_C2({set1({0.0, 9.0})}, 0.5);
  CHECK(single.satisfied);
  CHECK(std::isinf(single.min_d_b));
}

TEST_CASE("separation is preserved when pruning connected supports") {
  // With every support a single connected component, d_w = 0, so removing
  // points (which can only grow d_b) keeps the condition satisfied.
  RngStream rng(57);
  for (int trial = 0; trial < 100; ++trial) {
    const double gap = 1.0;
    std::vector<std::vector<double>> raw(3);
    for (int k = 0; k < 3; ++k) {
      const double center = 10.0 * k;
      double x = center;
      const int n = 3 + (int)(rng.uniform() * 5.0);
      for (int i = 0; i < n; ++i) {
        raw[k].push_back(x);
        x += rng.uniform(0.05, 0.9 * gap);  // consecutive gaps stay below gap
      }
    }
    auto build = [&](const std::vector<std::vector<double>>& pts) {
      std::vector<FiniteSupportSet> s;
      for (const auto& p : pts) s.push_back(set1(p));
      return s;
    };
    const auto before = check_separation_C2(build(raw), gap);
    REQUIRE(before.satisfied);

    // Drop one interior point of each support; chains this tight cannot
    // split because consecutive distances stay below the gap.
    std::vector<std::vector<double>> pruned = raw;
    for (auto& p : pruned) {
      if (p.size() > 2) p.erase(p.begin() + (long)(p.size() / 2));
    }
    bool still_connected = true;
    for (const auto& p : pruned) {
      still_connected &= connected_components(set1(p), gap).size() == 1;
    }
    if (!still_connected) continue;
    const auto after = check_separation_C2(build(pruned), gap);
    CHECK(after.satisfied);
    CHECK(after.min_d_b >= before.min_d_b - 1e-12);
  }
}

TEST_CASE("hypercube disjointness") {
  const Hypercube a{vec2(0, 0), 1.0};
  const Hypercube b{vec2(3, 0), 1.0};
  const Hypercube c{vec2(1.5, 0), 1.0};
  CHECK(hypercubes_disjoint(a, b));
  CHECK_FALSE(hypercubes_disjoint(a, c));
  CHECK_FALSE(hypercubes_disjoint(a, a));
}
