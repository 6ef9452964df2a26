// Synthetic ground-truth generators for tests and acceptance experiments:
// random Hermite-combination densities, Laplace and skewed exponential-power
// distributions, circle-arranged Gaussian mixtures, and mixture sampling
// with retained labels.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "npmix/geometry.hpp"
#include "npmix/model.hpp"
#include "npmix/rngdist.hpp"

namespace npmix {

// One mixture component with exact pdf evaluation and a sampler. support_lo
// and support_hi bound the region holding all but ~1e-4 of the mass
// (first coordinate only); NaN when the generator does not provide them.
struct SyntheticComponent {
  int dim = 1;
  std::function<double(const Eigen::VectorXd&)> pdf;
  std::function<Eigen::VectorXd(RngStream&)> sample;
  double support_lo = std::numeric_limits<double>::quiet_NaN();
  double support_hi = std::numeric_limits<double>::quiet_NaN();

  double pdf1(double x) const {
    Eigen::VectorXd v(1);
    v(0) = x;
    return pdf(v);
  }
};

struct SyntheticTruth {
  std::vector<double> weights;
  std::vector<SyntheticComponent> components;

  int dim() const { return components.empty() ? 0 : components[0].dim; }
  void validate() const;

  // Mixture pdf at a point.
  double pdf(const Eigen::VectorXd& x) const;
  double pdf1(double x) const;

  // Separation report built from the component support intervals
  // (univariate truths with known supports only).
  SeparationReport separation_report(double gap) const;
};

struct LabeledSample {
  Dataset data;
  std::vector<int> labels;  // component index per observation, 0-based
};

// Positive-part-normalized random combination of Hermite functions centered
// at `center`; coefficients decay geometrically with degree. Retries
// internally when the positive part degenerates and throws
// DegenerateEstimateError after 100 failed seeds.
SyntheticComponent hermite_random_density(double center, double halfwidth,
                                          int degree, std::uint64_t seed);

// Laplace(mu, b) with an inverse-CDF sampler.
SyntheticComponent laplace_density(double mu, double b);

// Epsilon-skew exponential-power family: location mu, scale alpha, shape
// beta_shape, skew in (-1, 1). skew=0 recovers the symmetric family.
SyntheticComponent skew_exp_power_density(double mu, double alpha,
                                          double beta_shape, double skew);

// Gaussian N(mu, sigma^2), exposed because several experiments use plain
// Gaussian truths.
SyntheticComponent gaussian_density(double mu, double sigma);

// Equal-weight mixture of n_atoms Gaussians with means equally spaced on the
// circle of the given center and radius, covariances random SPD with
// eigenvalues in [cov_scale/4, cov_scale].
SyntheticComponent gmm_on_circle(const Eigen::Vector2d& center, double radius,
                                 int n_atoms, double cov_scale,
                                 std::uint64_t seed);

// Draws n observations from the truth; labels follow the weights and are
// retained for scoring.
LabeledSample sample_mixture(const SyntheticTruth& truth, long long n,
                             std::uint64_t seed);

}  // namespace npmix
