#ifndef NPMIX_GEOMETRY_HPP
#define NPMIX_GEOMETRY_HPP

// Distances between finite supports of discrete mixing measures and the
// separation checks built on them: single-linkage connectivity, within- and
// between-support distances, and the d_w < d_b identifiability condition.

#include <vector>

#include <Eigen/Dense>

namespace npmix {

struct Interval {
  double center = 0.0;
  double halfwidth = 0.0;  // the interval is [center - halfwidth, center + halfwidth]

  double lo() const { return center - halfwidth; }
  double hi() const { return center + halfwidth; }
};

struct Hypercube {
  Eigen::VectorXd center;
  double halfwidth = 0.0;  // L-infinity ball
};

// Atoms of a discrete mixing measure. Duplicate points within merge_tol are
// collapsed at construction.
class FiniteSupportSet {
 public:
  explicit FiniteSupportSet(std::vector<Eigen::VectorXd> points,
                            double merge_tol = 1e-9);
  // 1-D convenience constructor.
  explicit FiniteSupportSet(const std::vector<double>& points,
                            double merge_tol = 1e-9);

  const std::vector<Eigen::VectorXd>& points() const { return points_; }
  int dim() const { return static_cast<int>(points_.front().size()); }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<Eigen::VectorXd> points_;
};

// Minimum pairwise Euclidean distance between two supports.
double d_c(const FiniteSupportSet& a, const FiniteSupportSet& b);

// Single-linkage clustering: two points share a component iff a chain with
// consecutive distances < gap connects them.
std::vector<FiniteSupportSet> connected_components(const FiniteSupportSet& s,
                                                   double gap);

// Pairs (i, j) such that no third component is strictly closer to both.
std::vector<std::pair<int, int>> neighbor_pairs(
    const std::vector<FiniteSupportSet>& components);

// Within-support distance: 0 for a single connected component, otherwise the
// largest d_c over neighboring component pairs.
double d_w(const FiniteSupportSet& s, double gap);

// Between-support distance; for finite sets this equals d_c.
double d_b(const FiniteSupportSet& a, const FiniteSupportSet& b);

struct SeparationReport {
  bool satisfied = false;
  double max_d_w = 0.0;
  double min_d_b = 0.0;  // +inf when fewer than two supports
};

// Checks max_k d_w(V_k) < min_{i<j} d_b(V_i, V_j); vacuously true for K = 1.
SeparationReport check_separation_C2(
    const std::vector<FiniteSupportSet>& supports, double gap);

// True iff the open hypercubes are disjoint: ||c_a - c_b||_inf > r_a + r_b.
bool hypercubes_disjoint(const Hypercube& a, const Hypercube& b);

}  // namespace npmix

#endif  // NPMIX_GEOMETRY_HPP
