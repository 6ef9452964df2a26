#include "npmix/summary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "npmix/errors.hpp"
#include "npmix/numerics.hpp"

namespace npmix {

namespace {

void check_grid(const std::vector<double>& grid, const char* what) {
  if (grid.empty()) {
    throw InvalidArgumentError(std::string(what) + ": grid is empty");
  }
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i])) {
      throw InvalidArgumentError(std::string(what) + ": grid not finite");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw InvalidArgumentError(std::string(what) +
                                 ": grid must be strictly increasing");
    }
  }
}

void check_chain(const ChainOutput& chain, const char* what) {
  if (chain.snapshots.empty()) {
    throw InvalidArgumentError(std::string(what) + ": empty chain");
  }
}

// Quantile pair for a band at the given level (level 0 collapses to the
// median). Sorts its argument.
void band_quantiles(std::vector<double>& vals, double level, double* lo,
                    double* hi) {
  std::sort(vals.begin(), vals.end());
  const double p_lo = 0.5 * (1.0 - level);
  *lo = empirical_quantile(vals, p_lo);
  *hi = empirical_quantile(vals, 1.0 - p_lo);
}

// Shared worker for 1-D and lattice bands: evaluates each snapshot at every
// point of a prepared point list.
DensityGrid band_impl(const ChainOutput& chain, DensityTarget target,
                      int component_k, std::vector<double> grid,
                      std::vector<double> grid2, double level, bool weighted,
                      int m) {
  const size_t n_snap = chain.snapshots.size();
  const size_t nx = grid.size();
  const size_t ny = grid2.empty() ? 1 : grid2.size();
  const size_t n_points = nx * ny;

  // Per-snapshot component lookup and log-weight under the canonical order.
  std::vector<int> orig_k(n_snap, 0);
  std::vector<double> log_w(n_snap, 0.0);
  if (target == DensityTarget::component) {
    if (component_k < 1 || component_k > chain.hp.K) {
      throw InvalidArgumentError("density_band: component index out of range");
    }
    for (size_t t = 0; t < n_snap; ++t) {
      const std::vector<int> order = canonical_order(chain.snapshots[t]);
      orig_k[t] = order[component_k - 1];
      const double w = chain.snapshots[t].w(orig_k[t]);
      log_w[t] = (weighted && w > 0.0) ? std::log(w)
                 : weighted            ? -INFINITY
                                       : 0.0;
    }
  }

  DensityGrid out;
  out.grid = std::move(grid);
  out.grid2 = std::move(grid2);
  out.band_level = level;
  out.mean.assign(n_points, 0.0);
  out.lower.assign(n_points, 0.0);
  out.upper.assign(n_points, 0.0);

  std::vector<double> vals(n_snap);
  double x[2];
  for (size_t p = 0; p < n_points; ++p) {
    x[0] = out.grid[p / ny];
    if (ny > 1) x[1] = out.grid2[p % ny];
    double sum = 0.0;
    for (size_t t = 0; t < n_snap; ++t) {
      const ChainState& st = chain.snapshots[t];
      double lp;
      if (target == DensityTarget::mixture) {
        lp = mixture_logpdf(st, chain.hp, x, m);
      } else {
        lp = log_w[t] + component_logpdf(st, chain.hp, orig_k[t] + 1, x, m);
      }
      vals[t] = std::isfinite(lp) ? std::exp(lp) : 0.0;
      sum += vals[t];
    }
    out.mean[p] = sum / (double)n_snap;
    band_quantiles(vals, level, &out.lower[p], &out.upper[p]);
  }
  return out;
}

}  // namespace

std::vector<int> canonical_order(const ChainState& state) {
  std::vector<int> order(state.K());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return state.c[a](0) < state.c[b](0);
  });
  return order;
}

std::vector<double> default_grid(const std::vector<double>& values, int points,
                                 double pad) {
  if (values.empty() || points < 2) {
    throw InvalidArgumentError("default_grid: need values and >= 2 points");
  }
  double lo = values[0], hi = values[0], mean = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
  }
  mean /= (double)values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1
                        ? std::sqrt(ss / (double)(values.size() - 1))
                        : 1.0;
  lo -= pad * sd;
  hi += pad * sd;
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) {
    grid[i] = lo + (hi - lo) * (double)i / (double)(points - 1);
  }
  return grid;
}

DensityGrid density_band(const ChainOutput& chain, DensityTarget target,
                         int component_k, const std::vector<double>& grid,
                         double level, bool weighted) {
  check_chain(chain, "density_band");
  check_grid(grid, "density_band");
  if (level < 0.0 || level >= 1.0) {
    throw InvalidArgumentError("density_band: level must lie in [0, 1)");
  }
  if (chain.hp.dim() != 1) {
    throw InvalidArgumentError("density_band: 1-D grid on non-univariate chain");
  }
  return band_impl(chain, target, component_k, grid, {}, level, weighted, 1);
}

DensityGrid density_band_2d(const ChainOutput& chain, DensityTarget target,
                            int component_k, const std::vector<double>& grid_x,
                            const std::vector<double>& grid_y, double level,
                            bool weighted) {
  check_chain(chain, "density_band_2d");
  check_grid(grid_x, "density_band_2d");
  check_grid(grid_y, "density_band_2d");
  if (level < 0.0 || level >= 1.0) {
    throw InvalidArgumentError("density_band_2d: level must lie in [0, 1)");
  }
  if (chain.hp.dim() != 2) {
    throw InvalidArgumentError("density_band_2d: chain is not bivariate");
  }
  return band_impl(chain, target, component_k, grid_x, grid_y, level, weighted,
                   2);
}

WeightTable weight_table(const ChainOutput& chain, double level) {
  check_chain(chain, "weight_table");
  if (level < 0.0 || level >= 1.0) {
    throw InvalidArgumentError("weight_table: level must lie in [0, 1)");
  }
  const int K = chain.hp.K;
  const bool bg = chain.hp.background.has_value();
  const size_t n_snap = chain.snapshots.size();

  WeightTable out;
  out.level = level;
  out.has_background = bg;
  out.rows.resize(K + (bg ? 1 : 0));

  std::vector<double> vals(n_snap);
  for (int k = 0; k < K; ++k) {
    double sum = 0.0;
    for (size_t t = 0; t < n_snap; ++t) {
      const std::vector<int> order = canonical_order(chain.snapshots[t]);
      vals[t] = chain.snapshots[t].w(order[k]);
      sum += vals[t];
    }
    out.rows[k].mean = sum / (double)n_snap;
    band_quantiles(vals, level, &out.rows[k].lower, &out.rows[k].upper);
  }
  if (bg) {
    double sum = 0.0;
    for (size_t t = 0; t < n_snap; ++t) {
      vals[t] = chain.snapshots[t].w_bg;
      sum += vals[t];
    }
    out.rows[K].mean = sum / (double)n_snap;
    band_quantiles(vals, level, &out.rows[K].lower, &out.rows[K].upper);
  }
  return out;
}

namespace {

// Joint CDF contribution of one Gaussian atom at (x, y).
double atom_cdf(const Atom& a, double x, double y) {
  const double s1 = std::sqrt(a.sigma(0, 0));
  const double s2 = std::sqrt(a.sigma(1, 1));
  const double h = (x - a.u(0)) / s1;
  const double k = (y - a.u(1)) / s2;
  const double off = a.sigma(0, 1);
  if (std::fabs(off) <= 1e-14 * s1 * s2) {
    return std_normal_cdf(h) * std_normal_cdf(k);
  }
  const double rho = off / (s1 * s2);
  return bvn_cdf(h, k, std::min(std::max(rho, -1.0), 1.0));
}

// Fraction of the background window lying in (-inf, x] x (-inf, y].
double window_cdf(const Window& win, double x, double y) {
  double frac = 1.0;
  const double pt[2] = {x, y};
  for (int d = 0; d < 2; ++d) {
    const double len = win.hi(d) - win.lo(d);
    const double cut = std::min(pt[d], win.hi(d)) - win.lo(d);
    if (cut <= 0.0) return 0.0;
    frac *= cut / len;
  }
  return frac;
}

}  // namespace

std::vector<double> cdf_grid(const ChainOutput& chain,
                             const std::vector<double>& xs,
                             const std::vector<double>& ys) {
  check_chain(chain, "cdf_grid");
  check_grid(xs, "cdf_grid");
  check_grid(ys, "cdf_grid");
  if (chain.hp.dim() != 2) {
    throw InvalidArgumentError("cdf_grid: chain is not bivariate");
  }
  const size_t nx = xs.size(), ny = ys.size();
  std::vector<double> out(nx * ny, 0.0);
  const size_t n_snap = chain.snapshots.size();

  for (size_t t = 0; t < n_snap; ++t) {
    const ChainState& st = chain.snapshots[t];
    // Sticks are renormalized within each component so every snapshot's CDF
    // reaches exactly 1 at (+inf, +inf).
    for (size_t p = 0; p < nx * ny; ++p) {
      const double x = xs[p / ny];
      const double y = ys[p % ny];
      double f = 0.0;
      for (int k0 = 0; k0 < st.K(); ++k0) {
        double beta_sum = 0.0;
        double acc = 0.0;
        for (const Atom& a : st.atoms[k0]) {
          beta_sum += a.beta;
          acc += a.beta * atom_cdf(a, x, y);
        }
        if (beta_sum > 0.0) f += st.w(k0) * acc / beta_sum;
      }
      if (chain.hp.background.has_value()) {
        f += st.w_bg * window_cdf(*chain.hp.background, x, y);
      }
      out[p] += f;
    }
  }
  for (double& v : out) {
    v = std::min(std::max(v / (double)n_snap, 0.0), 1.0);
  }
  return out;
}

namespace {

double distance_from_values(const std::vector<double>& grid,
                            const std::vector<double>& a,
                            const std::vector<double>& b,
                            DistanceMetric metric) {
  std::vector<double> integrand(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    if (metric == DistanceMetric::l1) {
      integrand[i] = std::fabs(a[i] - b[i]);
    } else {
      const double d = std::sqrt(std::max(a[i], 0.0)) -
                       std::sqrt(std::max(b[i], 0.0));
      integrand[i] = d * d;
    }
  }
  const double val = trapezoid(grid, integrand);
  return metric == DistanceMetric::l1 ? val : std::sqrt(std::max(val, 0.0));
}

}  // namespace

double density_distance(const std::vector<double>& grid,
                        const std::vector<double>& a,
                        const std::function<double(double)>& b,
                        DistanceMetric metric) {
  check_grid(grid, "density_distance");
  if (a.size() != grid.size()) {
    throw InvalidArgumentError("density_distance: value/grid size mismatch");
  }
  std::vector<double> bv(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) bv[i] = b(grid[i]);
  return distance_from_values(grid, a, bv, metric);
}

double density_distance(const std::vector<double>& grid,
                        const std::vector<double>& a,
                        const std::vector<double>& b, DistanceMetric metric) {
  check_grid(grid, "density_distance");
  if (a.size() != grid.size() || b.size() != grid.size()) {
    throw InvalidArgumentError("density_distance: value/grid size mismatch");
  }
  return distance_from_values(grid, a, b, metric);
}

double density_distance_2d(const std::vector<double>& grid_x,
                           const std::vector<double>& grid_y,
                           const std::vector<double>& a,
                           const std::function<double(double, double)>& b,
                           DistanceMetric metric) {
  check_grid(grid_x, "density_distance_2d");
  check_grid(grid_y, "density_distance_2d");
  if (a.size() != grid_x.size() * grid_y.size()) {
    throw InvalidArgumentError("density_distance_2d: value/grid size mismatch");
  }
  // Trapezoid along y for each x, then along x.
  std::vector<double> per_x(grid_x.size());
  std::vector<double> row(grid_y.size());
  for (size_t i = 0; i < grid_x.size(); ++i) {
    for (size_t j = 0; j < grid_y.size(); ++j) {
      const double av = a[i * grid_y.size() + j];
      const double bv = b(grid_x[i], grid_y[j]);
      if (metric == DistanceMetric::l1) {
        row[j] = std::fabs(av - bv);
      } else {
        const double d =
            std::sqrt(std::max(av, 0.0)) - std::sqrt(std::max(bv, 0.0));
        row[j] = d * d;
      }
    }
    per_x[i] = trapezoid(grid_y, row);
  }
  const double val = trapezoid(grid_x, per_x);
  return metric == DistanceMetric::l1 ? val : std::sqrt(std::max(val, 0.0));
}

}  // namespace npmix
