#ifndef NPMIX_NUMERICS_HPP
#define NPMIX_NUMERICS_HPP

// Shared numerical kernels: normal CDF/quantile, regularized incomplete
// gamma, log-domain combinatorics, Gauss-Legendre quadrature (fixed and
// adaptive), bivariate normal CDF, empirical quantiles.

#include <cstdint>
#include <functional>
#include <vector>

namespace npmix {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// Standard normal density, CDF and its complement. The CDF is computed via
// erfc so both tails keep full relative precision.
double std_normal_pdf(double x);
double std_normal_cdf(double x);
double std_normal_sf(double x);  // 1 - CDF, accurate for large x

double normal_pdf(double x, double mu, double sigma);
double log_normal_pdf(double x, double mu, double sigma);
// Standard normal CDF; short alias used throughout the samplers.
double normal_cdf(double x);

// Inverse standard normal CDF (Wichura's AS 241, ~1 ulp over (0,1)).
double inv_std_normal_cdf(double p);

// P(a,x) and Q(a,x): lower/upper regularized incomplete gamma functions.
double gammp(double a, double x);
double gammq(double a, double x);
// Solves gammq(a, t) = q for t (monotone bisection; q in [0,1]).
double inv_gammq(double a, double q);

// log of the binomial coefficient C(n, k).
double log_choose(int n, int k);

// log(sum(exp(v))) without overflow.
double log_sum_exp(const std::vector<double>& v);

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
// computed once per n by Newton iteration on the Legendre recurrence.
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussLegendreRule& gauss_legendre_rule(int n);

// Fixed n-point Gauss-Legendre integral of f over [a, b].
double gauss_legendre(const std::function<double(double)>& f, double a,
                      double b, int n);

// Adaptive Gauss-Legendre: recursively bisects panels until the 15-point
// value of a panel agrees with the sum over its halves within the local
// tolerance. Throws NumericalError if the recursion depth is exhausted.
double adaptive_gauss_legendre(const std::function<double(double)>& f,
                               double a, double b, double abs_tol,
                               int max_depth = 32);

// CDF of the standard bivariate normal with correlation rho at (h, k),
// i.e. P(X <= h, Y <= k). Plackett's identity integrated with the
// sin-substitution that removes the 1/sqrt(1-t^2) singularity.
double bvn_cdf(double h, double k, double rho);

// Empirical quantile with averaging at discontinuities (Hyndman-Fan type 2):
// q(p) = x_(ceil(np)) except at np integral, where adjacent order statistics
// are averaged. `sorted` must be ascending and nonempty.
double empirical_quantile(const std::vector<double>& sorted, double p);

// Trapezoid rule over an arbitrary strictly increasing grid.
double trapezoid(const std::vector<double>& grid,
                 const std::vector<double>& values);

}  // namespace npmix

#endif  // NPMIX_NUMERICS_HPP
