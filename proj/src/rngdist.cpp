#include "npmix/rngdist.hpp"

#include <cmath>

#include "npmix/errors.hpp"

namespace npmix {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

// Non-finite numeric inputs are treated as numerical degeneracy (they are
// almost always overflow propagated from an upstream computation), while
// finite out-of-domain parameters remain caller errors.
inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string(what) + ": non-finite argument");
  }
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), counter_(0) {
  key_ = mix64(mix64(seed + kGolden) ^ (stream_id * 0xC2B2AE3D27D4EB4Full));
}

std::uint64_t RngStream::next_u64() {
  return mix64(key_ + kGolden * ++counter_);
}

double RngStream::uniform() {
  // 53 random bits mapped into the open interval (0, 1).
  return (next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

RngStream RngStream::substream(std::uint64_t tag) const {
  const std::uint64_t child =
      mix64((stream_id_ * 0xD6E8FEB86659FD93ull) ^ (tag + kGolden));
  return RngStream(seed_, child);
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() < 1) {
    throw InvalidArgumentError("SpdMatrix: matrix must be square");
  }
  const double scale = std::max(1e-300, m_.cwiseAbs().maxCoeff());
  const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw InvalidArgumentError("SpdMatrix: matrix not symmetric");
  }
  m_ = 0.5 * (m_ + m_.transpose().eval());
  llt_.compute(m_);
  if (llt_.info() != Eigen::Success) {
    throw InvalidArgumentError("SpdMatrix: matrix not positive definite");
  }
}

SpdMatrix SpdMatrix::identity(int dim) {
  return SpdMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

bool SpdMatrix::is_diagonal(double rel_tol) const {
  const double scale = std::max(1e-300, m_.diagonal().cwiseAbs().maxCoeff());
  for (int i = 0; i < dim(); ++i) {
    for (int j = 0; j < dim(); ++j) {
      if (i != j && std::fabs(m_(i, j)) > rel_tol * scale) return false;
    }
  }
  return true;
}

double sample_normal(double mu, double sigma, RngStream& rng) {
  require_finite(mu, "sample_normal");
  require_finite(sigma, "sample_normal");
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError("sample_normal: sigma must be positive");
  }
  return mu + sigma * inv_std_normal_cdf(rng.uniform());
}

double truncated_normal_mass(double mu, double sigma, double lo, double hi) {
  const double a = (lo - mu) / sigma;
  const double b = (hi - mu) / sigma;
  if (a >= 0.0) return std_normal_sf(a) - std_normal_sf(b);
  if (b <= 0.0) return std_normal_cdf(b) - std_normal_cdf(a);
  return std_normal_cdf(b) - std_normal_cdf(a);
}

double truncated_normal_icdf(double mu, double sigma, double lo, double hi,
                             double u) {
  const double a = (lo - mu) / sigma;
  const double b = (hi - mu) / sigma;
  double z;
  if (a >= 0.0) {
    // Work with upper-tail probabilities: both bounds at or above the mean.
    const double qa = std_normal_sf(a);
    const double qb = std_normal_sf(b);
    const double q = qa + u * (qb - qa);
    z = -inv_std_normal_cdf(std::min(std::max(q, 5e-324), 1.0 - 1e-17));
  } else if (b <= 0.0) {
    const double pa = std_normal_cdf(a);
    const double pb = std_normal_cdf(b);
    const double p = pa + u * (pb - pa);
    z = inv_std_normal_cdf(std::min(std::max(p, 5e-324), 1.0 - 1e-17));
  } else {
    const double pa = std_normal_cdf(a);
    const double pb = std_normal_cdf(b);
    const double p = pa + u * (pb - pa);
    z = inv_std_normal_cdf(std::min(std::max(p, 5e-324), 1.0 - 1e-17));
  }
  z = std::min(std::max(z, a), b);
  return mu + sigma * z;
}

namespace {

// Robert (1995): rejection for the standard normal restricted to [a, b] with
// a deep in the upper tail, using an exponential proposal tilted at the
// optimal rate. Expected trials stay O(1) as a grows.
double tilted_tail_normal(double a, double b, RngStream& rng) {
  const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (int trial = 0; trial < 10000; ++trial) {
    const double e = -std::log(rng.uniform()) / lambda;
    const double z = a + e;
    if (z > b) continue;
    const double d = z - lambda;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
  }
  throw NumericalError("truncated normal tail rejection failed to accept");
}

}  // namespace

double sample_truncated_normal(double mu, double sigma, double lo, double hi,
                               RngStream& rng) {
  require_finite(mu, "sample_truncated_normal");
  require_finite(lo, "sample_truncated_normal");
  require_finite(hi, "sample_truncated_normal");
  require_finite(sigma, "sample_truncated_normal");
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError("sample_truncated_normal: sigma must be > 0");
  }
  if (!(lo < hi)) {
    throw InvalidArgumentError("sample_truncated_normal: requires lo < hi");
  }
  const double a = (lo - mu) / sigma;
  const double b = (hi - mu) / sigma;
  if (a > 5.0) return mu + sigma * tilted_tail_normal(a, b, rng);
  if (b < -5.0) return mu - sigma * tilted_tail_normal(-b, -a, rng);
  return truncated_normal_icdf(mu, sigma, lo, hi, rng.uniform());
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  require_finite(shape, "sample_gamma");
  require_finite(rate, "sample_gamma");
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw InvalidArgumentError("sample_gamma: shape and rate must be > 0");
  }
  if (shape < 1.0) {
    // Boost to shape+1 and scale back down (Marsaglia-Tsang trick).
    const double g = sample_gamma(shape + 1.0, 1.0, rng);
    const double u = rng.uniform();
    return g * std::pow(u, 1.0 / shape) / rate;
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = inv_std_normal_cdf(rng.uniform());
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double sample_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw InvalidArgumentError("sample_beta: parameters must be > 0");
  }
  const double ga = sample_gamma(a, 1.0, rng);
  const double gb = sample_gamma(b, 1.0, rng);
  const double s = ga + gb;
  if (s <= 0.0) return 0.5;  // only reachable on double underflow of both
  return ga / s;
}

double sample_inverse_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw InvalidArgumentError("sample_inverse_gamma: parameters must be > 0");
  }
  return 1.0 / sample_gamma(shape, scale, rng);
}

double sample_truncated_inverse_gamma(double shape, double scale, double lo,
                                      double hi, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw InvalidArgumentError(
        "sample_truncated_inverse_gamma: parameters must be > 0");
  }
  if (!(lo >= 0.0) || !(hi > lo)) {
    throw InvalidArgumentError(
        "sample_truncated_inverse_gamma: requires 0 <= lo < hi");
  }
  // CDF of InvGamma(shape, scale) at x is Q(shape, scale/x).
  const double Flo = (lo <= 0.0) ? 0.0 : gammq(shape, scale / lo);
  const double Fhi = std::isinf(hi) ? 1.0 : gammq(shape, scale / hi);
  const double mass = Fhi - Flo;
  if (!(mass > 1e-12)) {
    throw NumericalError(
        "sample_truncated_inverse_gamma: interval mass below 1e-12");
  }
  const double target = Flo + rng.uniform() * mass;
  const double t = inv_gammq(shape, target);  // t = scale / x
  double x = scale / t;
  if (x < lo) x = lo;
  if (x > hi) x = std::min(x, hi);
  return x;
}

std::vector<double> sample_dirichlet(const std::vector<double>& alpha,
                                     RngStream& rng) {
  if (alpha.empty()) {
    throw InvalidArgumentError("sample_dirichlet: empty parameter vector");
  }
  std::vector<double> out(alpha.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0)) {
      throw InvalidArgumentError("sample_dirichlet: parameters must be > 0");
    }
    out[i] = sample_gamma(alpha[i], 1.0, rng);
    sum += out[i];
  }
  if (!(sum > 0.0)) {
    throw NumericalError("sample_dirichlet: all gamma draws underflowed");
  }
  for (double& v : out) v /= sum;
  return out;
}

SpdMatrix sample_inverse_wishart(double df, const SpdMatrix& scale,
                                 RngStream& rng) {
  const int m = scale.dim();
  if (!(df > m - 1)) {
    throw InvalidArgumentError("sample_inverse_wishart: df must exceed dim-1");
  }
  // X ~ IW(df, Psi)  <=>  X^{-1} ~ Wishart(df, Psi^{-1}).
  const Eigen::MatrixXd psi_inv =
      scale.llt().solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(psi_inv).matrixL();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    // chi^2 with df - i degrees of freedom on the diagonal (Bartlett).
    const double chi2 = sample_gamma(0.5 * (df - i), 0.5, rng);
    A(i, i) = std::sqrt(chi2);
    for (int j = 0; j < i; ++j) {
      A(i, j) = inv_std_normal_cdf(rng.uniform());
    }
  }
  const Eigen::MatrixXd LA = L * A;
  const Eigen::MatrixXd W = LA * LA.transpose();
  Eigen::MatrixXd X =
      Eigen::LLT<Eigen::MatrixXd>(W).solve(Eigen::MatrixXd::Identity(m, m));
  X = 0.5 * (X + X.transpose().eval());
  return SpdMatrix(std::move(X));
}

Eigen::VectorXd sample_truncated_mvn_hypercube(const Eigen::VectorXd& mu,
                                               const SpdMatrix& Sigma,
                                               const Eigen::VectorXd& center,
                                               double halfwidth,
                                               RngStream& rng) {
  const int m = Sigma.dim();
  if (mu.size() != m || center.size() != m) {
    throw InvalidArgumentError(
        "sample_truncated_mvn_hypercube: dimension mismatch");
  }
  if (!(halfwidth > 0.0)) {
    throw InvalidArgumentError(
        "sample_truncated_mvn_hypercube: halfwidth must be > 0");
  }
  // Cheap mass sanity check on the coordinate marginals.
  for (int d = 0; d < m; ++d) {
    const double sd = std::sqrt(Sigma.mat()(d, d));
    const double mass = truncated_normal_mass(mu[d], sd, center[d] - halfwidth,
                                              center[d] + halfwidth);
    if (!(mass > 1e-14)) {
      throw NumericalError(
          "sample_truncated_mvn_hypercube: hypercube mass negligible");
    }
  }
  Eigen::VectorXd x(m);
  if (Sigma.is_diagonal()) {
    for (int d = 0; d < m; ++d) {
      const double sd = std::sqrt(Sigma.mat()(d, d));
      x[d] = sample_truncated_normal(mu[d], sd, center[d] - halfwidth,
                                     center[d] + halfwidth, rng);
    }
    return x;
  }
  // Gibbs over coordinates with the conditional N(mu_d - L_dd^{-1} sum_{e!=d}
  // L_de (x_e - mu_e), 1/L_dd) read off the precision matrix.
  const Eigen::MatrixXd prec =
      Sigma.llt().solve(Eigen::MatrixXd::Identity(m, m));
  for (int d = 0; d < m; ++d) {
    x[d] = std::min(std::max(mu[d], center[d] - halfwidth),
                    center[d] + halfwidth);
  }
  constexpr int kSweeps = 10;
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (int d = 0; d < m; ++d) {
      double shift = 0.0;
      for (int e = 0; e < m; ++e) {
        if (e != d) shift += prec(d, e) * (x[e] - mu[e]);
      }
      const double cvar = 1.0 / prec(d, d);
      const double cmean = mu[d] - cvar * shift;
      x[d] = sample_truncated_normal(cmean, std::sqrt(cvar),
                                     center[d] - halfwidth,
                                     center[d] + halfwidth, rng);
    }
  }
  return x;
}

}  // namespace npmix
