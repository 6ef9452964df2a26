#ifndef NPMIX_MODEL_HPP
#define NPMIX_MODEL_HPP

// The region-restricted mixture-of-DP-mixtures model: hyperparameters, chain
// state, the repulsive prior on regions, region-restricted base measures, and
// mixture-density evaluation over a chain state.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npmix/rngdist.hpp"

namespace npmix {

enum class SeparationAxis { location, scale };

// Observation window for the optional uniform background component.
struct Window {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  double volume() const;
  bool contains(const double* x, int m) const;
};

// All fixed model constants. Call finalize(m) once the data dimension is
// known: it fills dimension-dependent defaults and validates everything.
struct Hyperparams {
  int K = 1;
  double dp_alpha = 1.0;        // DP concentration
  Eigen::VectorXd mu0;          // prior mean of region centers (size m)
  double eta = 2.0;             // prior sd of region centers (isotropic)
  double gamma_shape = 2.0;     // prior on region halfwidths r_i
  double gamma_rate = 2.0;
  double tau = 1.0;             // repulsion scale
  int nu = 2;                   // repulsion exponent
  double sigma0 = 1.0;          // base-measure location spread (Sigma1 = sigma0^2 I)
  double theta1 = 2.0;          // inverse-gamma shape for kernel variances
  double theta2 = 1.0;          // inverse-gamma scale
  double iw_df = 0.0;           // inverse-Wishart df; 0 -> m + 2
  Eigen::MatrixXd iw_scale;     // inverse-Wishart scale; empty -> identity
  double dirichlet_conc = 0.0;  // weight prior concentration; 0 -> 1/K
  SeparationAxis separation_axis = SeparationAxis::location;
  bool regions_fixed = false;
  // Used iff regions_fixed: user-supplied disjoint regions, never updated.
  std::vector<Eigen::VectorXd> fixed_centers;
  std::vector<double> fixed_radii;
  std::optional<Window> background;
  // Scale-axis mode only: prior mean/sd of the free location hyper-means.
  double loc_mu0 = 0.0;
  double loc_eta = 10.0;

  void finalize(int m);
  int dim() const { return (int)mu0.size(); }
};

// One active atom of a component's mixing measure. Univariate atoms use
// sigma2; multivariate atoms use sigma (with a cached Cholesky factor).
// log_norm caches the kernel's log normalizing constant.
struct Atom {
  Eigen::VectorXd u;
  double sigma2 = 1.0;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd sigma_chol;  // lower-triangular L with sigma = L L^T
  double beta = 0.0;
  double log_norm = 0.0;

  void refresh_cache();
  // log g_{u,sigma}(x); x points at m contiguous coordinates.
  double log_kernel(const double* x, int m) const;
};

struct Dataset {
  // Row-major so each observation is a contiguous m-vector.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x;
  std::vector<std::string> columns;

  int n() const { return (int)x.rows(); }
  int m() const { return (int)x.cols(); }
  const double* row(int i) const { return x.data() + (size_t)i * x.cols(); }
  void validate() const;
};

// Full sampler state. Component indices are 1-based in z (0 = background);
// internal containers are 0-based.
struct ChainState {
  Eigen::VectorXd w;                       // K component weights
  double w_bg = 0.0;                       // background weight (0 if disabled)
  std::vector<Eigen::VectorXd> c;          // K region centers
  std::vector<double> r;                   // K region halfwidths
  std::vector<std::vector<Atom>> atoms;    // per-component active atoms
  std::vector<int> z;                      // n labels in {0..K}
  std::vector<int> s;                      // n atom indices (-1 when z=0)
  std::vector<std::vector<double>> rho_star_kj;  // per-atom minimum slices
  std::vector<std::vector<long long>> i_star_kj; // argmin observation indices
  double rho_star = 1.0;                   // global slice threshold
  double xi = 0.0;                         // repulsion auxiliary
  std::vector<double> loc_mean;            // scale-axis location hyper-means
  double rho_star_bg = 1.0;                // background pseudo-atom slice min
  long long i_star_bg = -1;

  int K() const { return (int)c.size(); }
};

// Minimum pairwise gap between regions: |c_i - c_j| - r_i - r_j (Euclidean
// distance in 1-D, L-infinity for vectors). +inf for K = 1.
double min_region_gap(const std::vector<Eigen::VectorXd>& c,
                      const std::vector<double>& r);

// Repulsion auxiliary ceiling zeta = exp(-tau / gap^nu); 0 on overlap, 1 for
// K = 1.
double repulsion_zeta(const std::vector<Eigen::VectorXd>& c,
                      const std::vector<double>& r, const Hyperparams& hp);

// Joint log prior of region centers and halfwidths (normalizing constant of
// the repulsion factor omitted; every use is a ratio). Returns -inf when any
// two regions overlap.
double log_repulsive_prior(const std::vector<double>& c,
                           const std::vector<double>& r,
                           const Hyperparams& hp);
double log_repulsive_prior_mv(const std::vector<Eigen::VectorXd>& c,
                              const std::vector<double>& r,
                              const Hyperparams& hp);

// Log density of the component-k base measure at (u, sigma2) under `state`'s
// regions, in the (u, sigma) parameterization (includes the 2*sigma term).
// -inf off-support. Univariate (location or scale axis).
double log_base_measure(double u, double sigma2, int k, const ChainState& state,
                        const Hyperparams& hp);
// Multivariate counterpart: truncated Gaussian over the hypercube times
// inverse-Wishart.
double log_base_measure_mv(const Eigen::VectorXd& u,
                           const Eigen::MatrixXd& sigma, int k,
                           const ChainState& state, const Hyperparams& hp);

// Log inverse-gamma density at x.
double log_inverse_gamma_pdf(double x, double shape, double scale);
// Log gamma density at x (shape/rate).
double log_gamma_pdf(double x, double shape, double rate);
// Log inverse-Wishart density at X (df, scale).
double log_inverse_wishart_pdf(const Eigen::MatrixXd& X, double df,
                               const Eigen::MatrixXd& scale);

// Median of InvGamma(theta1, theta2); the plug-in kernel scale used for the
// residual-stick predictive term.
double inverse_gamma_median(double shape, double scale);

// log of the full mixture density at x (m coordinates). Residual stick mass
// per component is folded into a base-measure predictive kernel; the
// background term contributes w_bg / volume inside the window.
double mixture_logpdf(const ChainState& state, const Hyperparams& hp,
                      const double* x, int m);

// log of component k's density (1-based k in [1, K]); weights not applied.
double component_logpdf(const ChainState& state, const Hyperparams& hp, int k,
                        const double* x, int m);

}  // namespace npmix

#endif  // NPMIX_MODEL_HPP
