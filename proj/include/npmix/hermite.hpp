#ifndef NPMIX_HERMITE_HPP
#define NPMIX_HERMITE_HPP

// Component splitting through scaled Hermite functions: the shifted Gram
// matrix of two Hermite bases, projection of a pilot density estimate onto
// the joint basis, the coefficient solve, and positive-part normalized
// component estimates with their weight estimates.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace npmix {

// Two truncated Hermite-function bases with a common kernel scale sigma,
// centered at c1 < c2, each of size ell (degrees 0 .. ell-1). Basis entries
// are indexed (1,0)...(1,ell-1),(2,0)...(2,ell-1).
struct HermiteBasis {
  double sigma = 1.0;
  double c1 = 0.0;
  double c2 = 1.0;
  int ell = 1;

  HermiteBasis(double c1_, double c2_, double sigma_, int ell_);
  double separation() const { return c2 - c1; }
};

// Gaussian kernel density estimate over a sample.
class KdeEstimate {
 public:
  // bandwidth <= 0 selects h = 1.06 * sd(samples) * n^{-1/5}.
  explicit KdeEstimate(std::vector<double> samples, double bandwidth = 0.0);

  double operator()(double x) const;
  double bandwidth() const { return h_; }
  const std::vector<double>& samples() const { return sorted_; }

 private:
  std::vector<double> sorted_;
  double h_ = 0.0;
};

// Physicists' Hermite polynomial h_j(x) by the three-term recurrence.
double hermite_h(int j, double x);

// Scaled Hermite function psi_{j,mu,sigma}(x); the family is orthonormal in
// L2 for fixed (mu, sigma). Evaluated through the normalized recurrence so
// large degrees neither overflow nor lose the normalizer.
double psi(int j, double mu, double sigma, double x);

// Closed-form <psi_{i,mu1,sigma}, psi_{j,mu2,sigma}>; factorial and binomial
// terms are kept in log domain with explicit sign tracking.
double inner_psi_psi(int i, double mu1, int j, double mu2, double sigma);

// Closed-form <psi_{j,mu1,sigma}, g_{mu2,sigma}> with g the Gaussian density
// of the same scale.
double inner_psi_gauss(int j, double mu1, double mu2, double sigma);

// <psi_{j,mu,sigma}, g_{t,h}> for a Gaussian of a different scale h; used to
// project kernel density estimates without quadrature.
double inner_psi_gauss_scale(int j, double mu, double sigma, double t,
                             double h);

// The 2l-by-2l Gram matrix of the joint basis: unit diagonal blocks and
// cross blocks from inner_psi_psi at separation c2 - c1.
Eigen::MatrixXd build_A(const HermiteBasis& basis);

KdeEstimate kde_fit(const std::vector<double>& samples, double bandwidth = 0.0);

// Entries <fhat, psi_{j,c_i,sigma}> by adaptive Gauss-Legendre quadrature
// (absolute tolerance 1e-9 per entry).
Eigen::VectorXd project_yhat(const std::function<double(double)>& fhat,
                             const HermiteBasis& basis);

// Exact projection of a Gaussian-kernel KDE through the closed-form smoothed
// inner products; agrees with the quadrature path to ~1e-10.
Eigen::VectorXd project_yhat(const KdeEstimate& kde, const HermiteBasis& basis);

// Solves A lambda = y. Uses LU; falls back to an SVD least-squares solve
// when cond(A) exceeds 1e12, and throws NumericalError once A is numerically
// singular (signals ell too large for the separation).
Eigen::VectorXd solve_lambda(const Eigen::MatrixXd& A,
                             const Eigen::VectorXd& y_hat,
                             const HermiteBasis* basis = nullptr);

struct ComponentEstimates {
  std::function<double(double)> f1;  // normalized, nonnegative densities
  std::function<double(double)> f2;
  double w1 = 0.0;  // L1 mass of the positive parts (weight estimates)
  double w2 = 0.0;
};

// Positive-part normalized component densities from the coefficient vector:
// f_i = (sum_j lambda_{i,j} psi_{j,c_i,sigma})_+ / its L1 norm.
ComponentEstimates component_estimate(const Eigen::VectorXd& lambda_hat,
                                      const HermiteBasis& basis);

// Truncation level from the accuracy target and the mixing-support radius:
// ell = max(floor(log(1/epsilon)), floor(2 e r_i^2 / sigma^2)) + 1.
int choose_ell(double epsilon, double r_i, double sigma);

// Everything above bundled: KDE -> y -> lambda -> component estimates.
struct HermiteSplit {
  HermiteBasis basis;
  Eigen::MatrixXd A;
  Eigen::VectorXd y_hat;
  Eigen::VectorXd lambda_hat;
  ComponentEstimates estimates;
};

HermiteSplit hermite_split(const KdeEstimate& kde, const HermiteBasis& basis);

}  // namespace npmix

#endif  // NPMIX_HERMITE_HPP
