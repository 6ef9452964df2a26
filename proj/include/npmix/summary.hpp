// Posterior summaries over sampler output: density grids with pointwise
// credible bands, component weight tables, CDF grids, and density-distance
// diagnostics.
#pragma once

#include <functional>
#include <vector>

#include "npmix/sampler.hpp"

namespace npmix {

// Density values over a grid with pointwise credible bands. For a 2-D
// lattice, grid2 holds the second axis and values are row-major over
// (grid, grid2); for 1-D summaries grid2 is empty.
struct DensityGrid {
  std::vector<double> grid;
  std::vector<double> grid2;
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
  double band_level = 0.95;
};

struct WeightRow {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Rows follow the canonical component order; when a background category is
// present it appears as one extra final row.
struct WeightTable {
  std::vector<WeightRow> rows;
  double level = 0.68;
  bool has_background = false;
};

enum class DensityTarget { mixture, component };

enum class DistanceMetric { l1, hellinger };

// Canonical component order of a snapshot: indices of the original
// components sorted by ascending first coordinate of the region center.
std::vector<int> canonical_order(const ChainState& state);

// Evenly spaced grid spanning [min, max] of the values padded by pad sample
// standard deviations on each side.
std::vector<double> default_grid(const std::vector<double>& values,
                                 int points = 512, double pad = 3.0);

// Pointwise posterior mean and empirical quantile band of the mixture
// density, or of component k (1-based, in canonical order). When weighted is
// set the component density is scaled by its snapshot mixture weight.
// level=0 collapses the band to the pointwise median.
DensityGrid density_band(const ChainOutput& chain, DensityTarget target,
                         int component_k, const std::vector<double>& grid,
                         double level, bool weighted = false);

// Lattice version for bivariate data; values are row-major over
// (grid_x, grid_y).
DensityGrid density_band_2d(const ChainOutput& chain, DensityTarget target,
                            int component_k, const std::vector<double>& grid_x,
                            const std::vector<double>& grid_y, double level,
                            bool weighted = false);

// Posterior mean and (1-level)/2, 1-(1-level)/2 quantiles of the mixture
// weights in canonical order.
WeightTable weight_table(const ChainOutput& chain, double level = 0.68);

// Posterior-mean joint CDF over a 2-D lattice; row-major over (xs, ys).
// Diagonal atom covariances use exact per-axis Gaussian CDF products;
// general covariances fall back to a numeric bivariate-normal CDF.
std::vector<double> cdf_grid(const ChainOutput& chain,
                             const std::vector<double>& xs,
                             const std::vector<double>& ys);

// Trapezoid-rule distance between a gridded density and a reference density
// (function or pre-evaluated values on the same grid).
double density_distance(const std::vector<double>& grid,
                        const std::vector<double>& a,
                        const std::function<double(double)>& b,
                        DistanceMetric metric);
double density_distance(const std::vector<double>& grid,
                        const std::vector<double>& a,
                        const std::vector<double>& b, DistanceMetric metric);

// 2-D lattice variant; a is row-major over (grid_x, grid_y).
double density_distance_2d(const std::vector<double>& grid_x,
                           const std::vector<double>& grid_y,
                           const std::vector<double>& a,
                           const std::function<double(double, double)>& b,
                           DistanceMetric metric);

}  // namespace npmix
