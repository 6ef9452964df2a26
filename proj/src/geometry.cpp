#include "npmix/geometry.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "npmix/errors.hpp"

namespace npmix {

FiniteSupportSet::FiniteSupportSet(std::vector<Eigen::VectorXd> points,
                                   double merge_tol) {
  if (points.empty()) {
    throw InvalidArgumentError("FiniteSupportSet: at least one point required");
  }
  const auto dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) {
      throw InvalidArgumentError("FiniteSupportSet: mixed dimensions");
    }
    bool dup = false;
    for (const auto& q : points_) {
      if ((p - q).norm() <= merge_tol) {
        dup = true;
        break;
      }
    }
    if (!dup) points_.push_back(p);
  }
}

FiniteSupportSet::FiniteSupportSet(const std::vector<double>& points,
                                   double merge_tol)
    : FiniteSupportSet(
          [&points] {
            std::vector<Eigen::VectorXd> v;
            v.reserve(points.size());
            for (double x : points) {
              v.push_back(Eigen::VectorXd::Constant(1, x));
            }
            return v;
          }(),
          merge_tol) {}

double d_c(const FiniteSupportSet& a, const FiniteSupportSet& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : a.points()) {
    for (const auto& q : b.points()) {
      best = std::min(best, (p - q).norm());
    }
  }
  return best;
}

std::vector<FiniteSupportSet> connected_components(const FiniteSupportSet& s,
                                                   double gap) {
  if (!(gap > 0.0)) {
    throw InvalidArgumentError("connected_components: gap must be > 0");
  }
  const auto& pts = s.points();
  const std::size_t n = pts.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((pts[i] - pts[j]).norm() < gap) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::vector<std::vector<Eigen::VectorXd>> groups;
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    std::size_t gi = roots.size();
    for (std::size_t k = 0; k < roots.size(); ++k) {
      if (roots[k] == r) {
        gi = k;
        break;
      }
    }
    if (gi == roots.size()) {
      roots.push_back(r);
      groups.emplace_back();
    }
    groups[gi].push_back(pts[i]);
  }
  std::vector<FiniteSupportSet> out;
  out.reserve(groups.size());
  for (auto& g : groups) out.emplace_back(std::move(g), 0.0);
  return out;
}

std::vector<std::pair<int, int>> neighbor_pairs(
    const std::vector<FiniteSupportSet>& components) {
  const int k = static_cast<int>(components.size());
  std::vector<std::pair<int, int>> pairs;
  if (k < 2) return pairs;
  Eigen::MatrixXd dist(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      dist(i, j) = dist(j, i) = d_c(components[i], components[j]);
    }
  }
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      bool blocked = false;
      for (int l = 0; l < k && !blocked; ++l) {
        if (l == i || l == j) continue;
        blocked = dist(i, l) < dist(i, j) && dist(j, l) < dist(i, j);
      }
      if (!blocked) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

double d_w(const FiniteSupportSet& s, double gap) {
  const auto comps = connected_components(s, gap);
  if (comps.size() <= 1) return 0.0;
  double best = 0.0;
  for (const auto& [i, j] : neighbor_pairs(comps)) {
    best = std::max(best, d_c(comps[i], comps[j]));
  }
  return best;
}

double d_b(const FiniteSupportSet& a, const FiniteSupportSet& b) {
  return d_c(a, b);
}

SeparationReport check_separation_C2(
    const std::vector<FiniteSupportSet>& supports, double gap) {
  if (supports.empty()) {
    throw InvalidArgumentError("check_separation_C2: no supports given");
  }
  SeparationReport report;
  report.max_d_w = 0.0;
  for (const auto& s : supports) {
    report.max_d_w = std::max(report.max_d_w, d_w(s, gap));
  }
  report.min_d_b = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < supports.size(); ++i) {
    for (std::size_t j = i + 1; j < supports.size(); ++j) {
      report.min_d_b = std::min(report.min_d_b, d_b(supports[i], supports[j]));
    }
  }
  report.satisfied = report.max_d_w < report.min_d_b;
  return report;
}

bool hypercubes_disjoint(const Hypercube& a, const Hypercube& b) {
  if (a.center.size() != b.center.size()) {
    throw InvalidArgumentError("hypercubes_disjoint: dimension mismatch");
  }
  const double gap = (a.center - b.center).cwiseAbs().maxCoeff() -
                     a.halfwidth - b.halfwidth;
  return gap > 0.0;
}

}  // namespace npmix
