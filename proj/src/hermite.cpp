#include "npmix/hermite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "npmix/errors.hpp"
#include "npmix/numerics.hpp"

namespace npmix {

namespace {

constexpr double kQuarterRootPi = 1.3313353638003897;  // pi^{1/4}

// Effective half-width of the degree-(ell-1) basis member plus a generous
// Gaussian tail allowance; integrals of basis expansions are negligible
// beyond it.
double basis_pad(double sigma, int ell) {
  return sigma * (std::sqrt(2.0 * ell) + 12.0);
}

}  // namespace

HermiteBasis::HermiteBasis(double c1_, double c2_, double sigma_, int ell_)
    : sigma(sigma_), c1(c1_), c2(c2_), ell(ell_) {
  if (!std::isfinite(c1) || !std::isfinite(c2) || !std::isfinite(sigma)) {
    throw InvalidArgumentError("HermiteBasis: parameters must be finite");
  }
  if (!(c1 < c2)) {
    throw InvalidArgumentError("HermiteBasis: requires c1 < c2");
  }
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError("HermiteBasis: requires sigma > 0");
  }
  if (ell < 1) {
    throw InvalidArgumentError("HermiteBasis: requires ell >= 1");
  }
}

double hermite_h(int j, double x) {
  if (j < 0) throw InvalidArgumentError("hermite_h: degree must be >= 0");
  if (j == 0) return 1.0;
  double hm2 = 1.0;
  double hm1 = 2.0 * x;
  for (int k = 2; k <= j; ++k) {
    const double hk = 2.0 * x * hm1 - 2.0 * (k - 1) * hm2;
    hm2 = hm1;
    hm1 = hk;
  }
  return hm1;
}

double psi(int j, double mu, double sigma, double x) {
  if (j < 0) throw InvalidArgumentError("psi: degree must be >= 0");
  if (!(sigma > 0.0)) throw InvalidArgumentError("psi: requires sigma > 0");
  const double t = (x - mu) / sigma;
  // phi_j(t) = p_j(t) * pi^{-1/4} * exp(-t^2/2) with p_j = H_j / sqrt(2^j j!).
  // The p recurrence stays polynomial-sized (|p_j| <= ~e^{t^2/2}), so run it
  // in extended precision and attach the Gaussian factor once at the end.
  long double prev2 = 0.0L;  // p_{k-2}
  long double prev = 1.0L;   // p_{k-1}, seeded with p_0 = 1
  long double p = 1.0L;
  for (int k = 1; k <= j; ++k) {
    p = t * sqrtl(2.0L / k) * prev - sqrtl((k - 1.0L) / k) * prev2;
    prev2 = prev;
    prev = p;
  }
  const long double value =
      p * expl(-0.5L * (long double)t * t) / (long double)kQuarterRootPi;
  const double sign = (j % 2 == 0) ? 1.0 : -1.0;
  return sign * (double)(value / sqrtl((long double)sigma));
}

namespace {

// log|value| and sign of sqrt(m!/n!) * (-a)^{n-m} * exp(-a^2/2) * L_m^{(n-m)}(a^2)
// for n >= m, which equals the overlap of orthonormal Hermite functions
// phi_m(t) and phi_n(t - delta) with a = delta/sqrt(2). The Laguerre value is
// run through its degree recurrence with overflow rescaling.
void hermite_overlap_log(int m, int n, double a, double* log_mag,
                         double* sign) {
  const int alpha = n - m;
  const double x = a * a;
  // Laguerre L_k^{(alpha)}(x) by the three-term recurrence, rescaled when the
  // magnitude grows past 1e250 so the exponent never saturates.
  double lkm1 = 1.0;
  double lk = 1.0 + alpha - x;
  double scale_log = 0.0;
  if (m == 0) {
    lk = 1.0;
  } else {
    for (int k = 1; k < m; ++k) {
      const double lkp1 =
          ((2.0 * k + 1.0 + alpha - x) * lk - (k + alpha) * lkm1) / (k + 1.0);
      lkm1 = lk;
      lk = lkp1;
      const double mag = std::max(std::fabs(lk), std::fabs(lkm1));
      if (mag > 1e250) {
        lk /= 1e250;
        lkm1 /= 1e250;
        scale_log += std::log(1e250);
      }
    }
  }
  double s = (lk >= 0.0) ? 1.0 : -1.0;
  if (lk == 0.0) s = 0.0;
  // (-a)^{n-m} contributes sign (-sign(a))^{n-m}.
  if (alpha % 2 != 0 && a > 0.0) s = -s;
  const double log_a = (a == 0.0) ? -INFINITY : std::log(std::fabs(a));
  *log_mag = 0.5 * (std::lgamma(m + 1.0) - std::lgamma(n + 1.0)) +
             alpha * log_a - 0.5 * x + scale_log +
             ((lk == 0.0) ? -INFINITY : std::log(std::fabs(lk)));
  *sign = s;
}

}  // namespace

double inner_psi_psi(int i, double mu1, int j, double mu2, double sigma) {
  if (i < 0 || j < 0) {
    throw InvalidArgumentError("inner_psi_psi: degrees must be >= 0");
  }
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError("inner_psi_psi: requires sigma > 0");
  }
  const double delta = (mu2 - mu1) / sigma;
  if (delta == 0.0) return (i == j) ? 1.0 : 0.0;
  const double a = delta / std::sqrt(2.0);
  // <psi_i, psi_j> = (-1)^{i+j} * overlap(min, max; +-a); swapping the roles
  // of the two functions flips the shift sign.
  int m = i, n = j;
  double aa = a;
  if (m > n) {
    std::swap(m, n);
    aa = -a;
  }
  double log_mag = 0.0, sign = 0.0;
  hermite_overlap_log(m, n, aa, &log_mag, &sign);
  if (((i + j) % 2) != 0) sign = -sign;
  if (sign == 0.0 || log_mag == -INFINITY) return 0.0;
  return sign * std::exp(log_mag);
}

double inner_psi_gauss(int j, double mu1, double mu2, double sigma) {
  if (j < 0) {
    throw InvalidArgumentError("inner_psi_gauss: degree must be >= 0");
  }
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError("inner_psi_gauss: requires sigma > 0");
  }
  const double delta = (mu2 - mu1) / sigma;
  if (j == 0) {
    return std::exp(-0.25 * delta * delta) /
           std::sqrt(2.0 * sigma * std::sqrt(kPi));
  }
  if (delta == 0.0) return 0.0;
  const double log_norm =
      -0.5 * ((j + 1.0) * std::log(2.0) + std::lgamma(j + 1.0) +
              std::log(sigma) + 0.5 * std::log(kPi));
  const double log_mag = log_norm + j * std::log(std::fabs(delta)) -
                         0.25 * delta * delta;
  double sign = (j % 2 == 0) ? 1.0 : -1.0;
  if (delta < 0.0 && j % 2 != 0) sign = -sign;
  return sign * std::exp(log_mag);
}

double inner_psi_gauss_scale(int j, double mu, double sigma, double t,
                             double h) {
  if (j < 0) {
    throw InvalidArgumentError("inner_psi_gauss_scale: degree must be >= 0");
  }
  if (!(sigma > 0.0) || !(h > 0.0)) {
    throw InvalidArgumentError(
        "inner_psi_gauss_scale: requires sigma > 0 and h > 0");
  }
  const double d = t - mu;
  const double v = sigma * sigma + h * h;
  const double e_log = -0.5 * d * d / v;
  if (e_log < -700.0) return 0.0;
  const double w = sigma * d / v;
  const double q = (sigma * sigma - h * h) / v;
  // p_j = j! [z^j] exp(2 w z - q z^2); same recurrence family as Hermite.
  double pm2 = 1.0;
  double pm1 = 2.0 * w;
  double p = (j == 0) ? 1.0 : pm1;
  for (int k = 2; k <= j; ++k) {
    p = 2.0 * w * pm1 - 2.0 * (k - 1) * q * pm2;
    pm2 = pm1;
    pm1 = p;
  }
  const double log_norm =
      -0.5 * (j * std::log(2.0) + std::lgamma(j + 1.0) + std::log(sigma) +
              0.5 * std::log(kPi));
  const double sign = (j % 2 == 0) ? 1.0 : -1.0;
  return sign * p * std::exp(log_norm + e_log) * sigma / std::sqrt(v);
}

Eigen::MatrixXd build_A(const HermiteBasis& basis) {
  const int ell = basis.ell;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2 * ell, 2 * ell);
  for (int p = 0; p < ell; ++p) {
    for (int q = 0; q < ell; ++q) {
      const double v = inner_psi_psi(p, basis.c1, q, basis.c2, basis.sigma);
      A(p, ell + q) = v;
      A(ell + q, p) = v;
    }
  }
  return A;
}

KdeEstimate::KdeEstimate(std::vector<double> samples, double bandwidth)
    : sorted_(std::move(samples)) {
  if (sorted_.empty()) {
    throw InvalidArgumentError("KdeEstimate: sample set is empty");
  }
  for (double x : sorted_) {
    if (!std::isfinite(x)) {
      throw InvalidArgumentError("KdeEstimate: samples must be finite");
    }
  }
  std::sort(sorted_.begin(), sorted_.end());
  if (bandwidth > 0.0) {
    h_ = bandwidth;
  } else {
    const size_t n = sorted_.size();
    if (n < 2) {
      throw InvalidArgumentError(
          "KdeEstimate: need >= 2 samples for the bandwidth rule");
    }
    const double mean =
        std::accumulate(sorted_.begin(), sorted_.end(), 0.0) / (double)n;
    double ss = 0.0;
    for (double x : sorted_) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (double)(n - 1));
    if (!(sd > 0.0)) {
      throw InvalidArgumentError(
          "KdeEstimate: degenerate sample spread; pass a bandwidth");
    }
    h_ = 1.06 * sd * std::pow((double)n, -0.2);
  }
}

double KdeEstimate::operator()(double x) const {
  // Kernels beyond 10 bandwidths contribute < 2e-22 relative mass.
  const double cut = 10.0 * h_;
  auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x - cut);
  auto hi = std::upper_bound(sorted_.begin(), sorted_.end(), x + cut);
  double acc = 0.0;
  for (auto it = lo; it != hi; ++it) {
    const double z = (x - *it) / h_;
    acc += std::exp(-0.5 * z * z);
  }
  return acc / ((double)sorted_.size() * h_ * std::sqrt(2.0 * kPi));
}

KdeEstimate kde_fit(const std::vector<double>& samples, double bandwidth) {
  return KdeEstimate(samples, bandwidth);
}

Eigen::VectorXd project_yhat(const std::function<double(double)>& fhat,
                             const HermiteBasis& basis) {
  const int ell = basis.ell;
  const double pad = basis_pad(basis.sigma, ell) + basis.separation();
  const double lo = basis.c1 - pad;
  const double hi = basis.c2 + pad;
  Eigen::VectorXd y(2 * ell);
  for (int b = 0; b < 2; ++b) {
    const double center = (b == 0) ? basis.c1 : basis.c2;
    for (int jdeg = 0; jdeg < ell; ++jdeg) {
      auto integrand = [&](double x) {
        return fhat(x) * psi(jdeg, center, basis.sigma, x);
      };
      y(b * ell + jdeg) = adaptive_gauss_legendre(integrand, lo, hi, 1e-9);
    }
  }
  return y;
}

Eigen::VectorXd project_yhat(const KdeEstimate& kde,
                             const HermiteBasis& basis) {
  const int ell = basis.ell;
  const double h = kde.bandwidth();
  const auto& xs = kde.samples();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * ell);
  for (double t : xs) {
    for (int b = 0; b < 2; ++b) {
      const double center = (b == 0) ? basis.c1 : basis.c2;
      for (int jdeg = 0; jdeg < ell; ++jdeg) {
        y(b * ell + jdeg) +=
            inner_psi_gauss_scale(jdeg, center, basis.sigma, t, h);
      }
    }
  }
  y /= (double)xs.size();
  return y;
}

Eigen::VectorXd solve_lambda(const Eigen::MatrixXd& A,
                             const Eigen::VectorXd& y_hat,
                             const HermiteBasis* basis) {
  if (A.rows() != A.cols() || A.rows() != y_hat.size()) {
    throw InvalidArgumentError("solve_lambda: dimension mismatch");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  const double cond = (smin > 0.0) ? smax / smin : INFINITY;
  if (!(cond < 1e15)) {
    char msg[160];
    if (basis != nullptr) {
      std::snprintf(msg, sizeof(msg),
                    "solve_lambda: Gram matrix numerically singular "
                    "(cond=%.3g, ell=%d, separation=%.6g, sigma=%.6g); "
                    "reduce ell or increase sigma",
                    cond, basis->ell, basis->separation(), basis->sigma);
    } else {
      std::snprintf(msg, sizeof(msg),
                    "solve_lambda: Gram matrix numerically singular "
                    "(cond=%.3g)",
                    cond);
    }
    throw NumericalError(msg);
  }
  if (cond > 1e12) {
    return svd.solve(y_hat);  // least-squares fallback
  }
  return Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(y_hat);
}

ComponentEstimates component_estimate(const Eigen::VectorXd& lambda_hat,
                                      const HermiteBasis& basis) {
  const int ell = basis.ell;
  if (lambda_hat.size() != 2 * ell) {
    throw InvalidArgumentError(
        "component_estimate: coefficient size must be 2*ell");
  }
  auto coeffs = std::make_shared<Eigen::VectorXd>(lambda_hat);
  const double sigma = basis.sigma;
  auto raw = [coeffs, ell, sigma](int block, double center, double x) {
    double acc = 0.0;
    for (int jdeg = 0; jdeg < ell; ++jdeg) {
      acc += (*coeffs)(block * ell + jdeg) * psi(jdeg, center, sigma, x);
    }
    return acc;
  };
  const double pad = basis_pad(sigma, ell);
  ComponentEstimates out;
  double mass[2];
  const double centers[2] = {basis.c1, basis.c2};
  for (int b = 0; b < 2; ++b) {
    auto pos = [&, b](double x) { return std::max(0.0, raw(b, centers[b], x)); };
    mass[b] = adaptive_gauss_legendre(pos, centers[b] - pad, centers[b] + pad,
                                      1e-9);
    if (!(mass[b] >= 1e-8)) {
      char msg[128];
      std::snprintf(msg, sizeof(msg),
                    "component_estimate: positive part of component %d has "
                    "mass %.3g (< 1e-8); estimate is degenerate",
                    b + 1, mass[b]);
      throw DegenerateEstimateError(msg);
    }
  }
  out.w1 = mass[0];
  out.w2 = mass[1];
  const double c1 = basis.c1, c2 = basis.c2;
  const double m1 = mass[0], m2 = mass[1];
  out.f1 = [raw, c1, m1](double x) {
    return std::max(0.0, raw(0, c1, x)) / m1;
  };
  out.f2 = [raw, c2, m2](double x) {
    return std::max(0.0, raw(1, c2, x)) / m2;
  };
  return out;
}

int choose_ell(double epsilon, double r_i, double sigma) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) {
    throw InvalidArgumentError("choose_ell: epsilon must lie in (0, 1)");
  }
  if (!(r_i > 0.0) || !(sigma > 0.0)) {
    throw InvalidArgumentError("choose_ell: requires r_i > 0 and sigma > 0");
  }
  const double e = std::exp(1.0);
  const long a = (long)std::floor(std::log(1.0 / epsilon));
  const long b = (long)std::floor(2.0 * e * r_i * r_i / (sigma * sigma));
  return (int)(std::max(a, b) + 1);
}

HermiteSplit hermite_split(const KdeEstimate& kde, const HermiteBasis& basis) {
  HermiteSplit split{basis, build_A(basis), project_yhat(kde, basis),
                     Eigen::VectorXd(), ComponentEstimates{}};
  split.lambda_hat = solve_lambda(split.A, split.y_hat, &basis);
  split.estimates = component_estimate(split.lambda_hat, basis);
  return split;
}

}  // namespace npmix
