#include "npmix/model.hpp"

#include <cmath>

#include "npmix/errors.hpp"
#include "npmix/numerics.hpp"

namespace npmix {

// --- Window -----------------------------------------------------------------

double Window::volume() const {
  if (lo.size() != hi.size() || lo.size() == 0) {
    throw InvalidArgumentError("Window: lo/hi size mismatch or empty");
  }
  double v = 1.0;
  for (int d = 0; d < lo.size(); ++d) {
    if (!(hi(d) > lo(d))) {
      throw InvalidArgumentError("Window: requires hi > lo per coordinate");
    }
    v *= hi(d) - lo(d);
  }
  return v;
}

bool Window::contains(const double* x, int m) const {
  if (m != (int)lo.size()) return false;
  for (int d = 0; d < m; ++d) {
    if (x[d] < lo(d) || x[d] > hi(d)) return false;
  }
  return true;
}

// --- Hyperparams --------------------------------------------------------------

void Hyperparams::finalize(int m) {
  if (m < 1) throw InvalidArgumentError("Hyperparams: dimension must be >= 1");
  if (K < 1) throw InvalidArgumentError("Hyperparams: K must be >= 1");
  if (mu0.size() == 0) mu0 = Eigen::VectorXd::Zero(m);
  if ((int)mu0.size() != m) {
    throw InvalidArgumentError("Hyperparams: mu0 size must equal data dim");
  }
  if (!(dp_alpha > 0.0)) throw InvalidArgumentError("Hyperparams: dp_alpha > 0");
  if (!(eta > 0.0)) throw InvalidArgumentError("Hyperparams: eta > 0");
  if (!(gamma_shape > 0.0) || !(gamma_rate > 0.0)) {
    throw InvalidArgumentError("Hyperparams: gamma_shape/gamma_rate > 0");
  }
  if (!(tau > 0.0)) throw InvalidArgumentError("Hyperparams: tau > 0");
  if (nu < 1) throw InvalidArgumentError("Hyperparams: nu must be >= 1");
  if (!(sigma0 > 0.0)) throw InvalidArgumentError("Hyperparams: sigma0 > 0");
  if (!(theta1 > 0.0) || !(theta2 > 0.0)) {
    throw InvalidArgumentError("Hyperparams: theta1/theta2 > 0");
  }
  if (!(loc_eta > 0.0)) throw InvalidArgumentError("Hyperparams: loc_eta > 0");
  if (iw_df == 0.0) iw_df = m + 2.0;
  if (!(iw_df > m - 1.0)) {
    throw InvalidArgumentError("Hyperparams: iw_df must exceed dim - 1");
  }
  if (iw_scale.size() == 0) iw_scale = Eigen::MatrixXd::Identity(m, m);
  if (iw_scale.rows() != m || iw_scale.cols() != m) {
    throw InvalidArgumentError("Hyperparams: iw_scale must be m x m");
  }
  SpdMatrix spd_check(iw_scale);  // validates SPD
  (void)spd_check;
  if (dirichlet_conc == 0.0) dirichlet_conc = 1.0 / K;
  if (!(dirichlet_conc > 0.0)) {
    throw InvalidArgumentError("Hyperparams: dirichlet_conc > 0");
  }
  if (separation_axis == SeparationAxis::scale && m != 1) {
    throw InvalidArgumentError(
        "Hyperparams: scale-axis separation is univariate only");
  }
  if (regions_fixed) {
    if ((int)fixed_centers.size() != K || (int)fixed_radii.size() != K) {
      throw InvalidArgumentError(
          "Hyperparams: regions_fixed needs K centers and K radii");
    }
    for (int i = 0; i < K; ++i) {
      if ((int)fixed_centers[i].size() != m) {
        throw InvalidArgumentError("Hyperparams: fixed center dim mismatch");
      }
      if (!(fixed_radii[i] > 0.0)) {
        throw InvalidArgumentError("Hyperparams: fixed radii must be > 0");
      }
    }
    if (!(min_region_gap(fixed_centers, fixed_radii) > 0.0)) {
      throw InvalidArgumentError(
          "Hyperparams: fixed regions must be pairwise disjoint");
    }
  }
  if (background.has_value()) {
    if ((int)background->lo.size() != m) {
      throw InvalidArgumentError("Hyperparams: background window dim mismatch");
    }
    background->volume();  // validates hi > lo
  }
}

// --- Atom ---------------------------------------------------------------------

void Atom::refresh_cache() {
  const int m = (int)u.size();
  if (m <= 1 && sigma.size() == 0) {
    if (!(sigma2 > 0.0)) throw InvalidArgumentError("Atom: sigma2 must be > 0");
    log_norm = -0.5 * (kLog2Pi + std::log(sigma2));
    return;
  }
  if (sigma.rows() != m || sigma.cols() != m) {
    throw InvalidArgumentError("Atom: covariance dimension mismatch");
  }
  Eigen::MatrixXd symm = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(symm);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("Atom: covariance is not positive definite");
  }
  sigma = symm;
  sigma_chol = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < m; ++i) log_det += 2.0 * std::log(sigma_chol(i, i));
  log_norm = -0.5 * (m * kLog2Pi + log_det);
}

double Atom::log_kernel(const double* x, int m) const {
  if (m == 1) {
    const double d = x[0] - u(0);
    return log_norm - 0.5 * d * d / sigma2;
  }
  double stack[64];
  std::vector<double> heap;
  double* zb = stack;
  if (m > 64) {
    heap.resize(m);
    zb = heap.data();
  }
  for (int i = 0; i < m; ++i) {
    double acc = x[i] - u(i);
    for (int j = 0; j < i; ++j) acc -= sigma_chol(i, j) * zb[j];
    zb[i] = acc / sigma_chol(i, i);
  }
  double q = 0.0;
  for (int i = 0; i < m; ++i) q += zb[i] * zb[i];
  return log_norm - 0.5 * q;
}

// --- Dataset --------------------------------------------------------------------

void Dataset::validate() const {
  if (x.rows() < 1 || x.cols() < 1) {
    throw InvalidArgumentError("Dataset: needs at least one row and column");
  }
  if (!x.allFinite()) {
    throw InvalidArgumentError("Dataset: entries must be finite");
  }
}

// --- Region geometry / repulsion -------------------------------------------------

double min_region_gap(const std::vector<Eigen::VectorXd>& c,
                      const std::vector<double>& r) {
  const int K = (int)c.size();
  if (K <= 1) return INFINITY;
  double gmin = INFINITY;
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) {
      const double dist = (c[i] - c[j]).cwiseAbs().maxCoeff();
      gmin = std::min(gmin, dist - r[i] - r[j]);
    }
  }
  return gmin;
}

double repulsion_zeta(const std::vector<Eigen::VectorXd>& c,
                      const std::vector<double>& r, const Hyperparams& hp) {
  if (c.size() <= 1) return 1.0;
  const double gap = min_region_gap(c, r);
  if (!(gap > 0.0)) return 0.0;
  return std::exp(-hp.tau / std::pow(gap, (double)hp.nu));
}

double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -INFINITY;
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

double log_inverse_gamma_pdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return -INFINITY;
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

namespace {

double log_multigamma(int m, double a) {
  double acc = 0.25 * m * (m - 1) * std::log(kPi);
  for (int i = 1; i <= m; ++i) acc += std::lgamma(a + 0.5 * (1 - i));
  return acc;
}

double log_repulsive_prior_impl(const std::vector<Eigen::VectorXd>& c,
                                const std::vector<double>& r,
                                const Hyperparams& hp) {
  const int K = (int)c.size();
  if (K < 1 || (int)r.size() != K) {
    throw InvalidArgumentError("log_repulsive_prior: need K centers and radii");
  }
  double acc = 0.0;
  for (int i = 0; i < K; ++i) {
    if (!(r[i] > 0.0)) return -INFINITY;
    for (int d = 0; d < c[i].size(); ++d) {
      acc += log_normal_pdf(c[i](d), hp.mu0(d), hp.eta);
    }
    acc += log_gamma_pdf(r[i], hp.gamma_shape, hp.gamma_rate);
  }
  if (K >= 2) {
    const double gap = min_region_gap(c, r);
    if (!(gap > 0.0)) return -INFINITY;
    acc += -hp.tau / std::pow(gap, (double)hp.nu);
  }
  return acc;
}

}  // namespace

double log_repulsive_prior(const std::vector<double>& c,
                           const std::vector<double>& r,
                           const Hyperparams& hp) {
  std::vector<Eigen::VectorXd> cv(c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    cv[i] = Eigen::VectorXd::Constant(1, c[i]);
  }
  return log_repulsive_prior_impl(cv, r, hp);
}

double log_repulsive_prior_mv(const std::vector<Eigen::VectorXd>& c,
                              const std::vector<double>& r,
                              const Hyperparams& hp) {
  return log_repulsive_prior_impl(c, r, hp);
}

// --- Base measures ---------------------------------------------------------------

namespace {

// Mass of InvGamma(shape, scale) on [lo2, hi2] (variance scale).
double inverse_gamma_mass(double shape, double scale, double lo2, double hi2) {
  const double f_hi = gammq(shape, scale / hi2);
  const double f_lo = (lo2 <= 0.0) ? 0.0 : gammq(shape, scale / lo2);
  return f_hi - f_lo;
}

}  // namespace

double log_base_measure(double u, double sigma2, int k, const ChainState& state,
                        const Hyperparams& hp) {
  if (k < 1 || k > state.K()) {
    throw InvalidArgumentError("log_base_measure: component index out of range");
  }
  if (!(sigma2 > 0.0)) return -INFINITY;
  const int ki = k - 1;
  const double ck = state.c[ki](0);
  const double rk = state.r[ki];
  const double sigma = std::sqrt(sigma2);
  if (hp.separation_axis == SeparationAxis::location) {
    if (u < ck - rk || u > ck + rk) return -INFINITY;
    const double mass = 1.0 - 2.0 * normal_cdf(-rk / hp.sigma0);
    return log_normal_pdf(u, ck, hp.sigma0) - std::log(mass) +
           log_inverse_gamma_pdf(sigma2, hp.theta1, hp.theta2) +
           std::log(2.0 * sigma);
  }
  // Scale axis: the region constrains sigma; u is untruncated around the
  // component's location hyper-mean.
  const double lo = std::max(ck - rk, 0.0);
  const double hi = ck + rk;
  if (!(hi > 0.0) || sigma < lo || sigma > hi) return -INFINITY;
  const double mass = inverse_gamma_mass(hp.theta1, hp.theta2, lo * lo, hi * hi);
  if (!(mass > 1e-300)) return -INFINITY;
  const double loc = state.loc_mean.empty() ? hp.loc_mu0 : state.loc_mean[ki];
  return log_normal_pdf(u, loc, hp.sigma0) +
         log_inverse_gamma_pdf(sigma2, hp.theta1, hp.theta2) - std::log(mass) +
         std::log(2.0 * sigma);
}

double log_inverse_wishart_pdf(const Eigen::MatrixXd& X, double df,
                               const Eigen::MatrixXd& scale) {
  const int m = (int)X.rows();
  Eigen::LLT<Eigen::MatrixXd> lltX(0.5 * (X + X.transpose()));
  if (lltX.info() != Eigen::Success) return -INFINITY;
  Eigen::LLT<Eigen::MatrixXd> lltS(0.5 * (scale + scale.transpose()));
  if (lltS.info() != Eigen::Success) {
    throw InvalidArgumentError("log_inverse_wishart_pdf: scale not SPD");
  }
  double log_det_x = 0.0, log_det_s = 0.0;
  for (int i = 0; i < m; ++i) {
    log_det_x += 2.0 * std::log(Eigen::MatrixXd(lltX.matrixL())(i, i));
    log_det_s += 2.0 * std::log(Eigen::MatrixXd(lltS.matrixL())(i, i));
  }
  const double trace = lltX.solve(scale).trace();
  return 0.5 * df * log_det_s - 0.5 * df * m * std::log(2.0) -
         log_multigamma(m, 0.5 * df) -
         0.5 * (df + m + 1.0) * log_det_x - 0.5 * trace;
}

double log_base_measure_mv(const Eigen::VectorXd& u,
                           const Eigen::MatrixXd& sigma, int k,
                           const ChainState& state, const Hyperparams& hp) {
  if (k < 1 || k > state.K()) {
    throw InvalidArgumentError(
        "log_base_measure_mv: component index out of range");
  }
  const int ki = k - 1;
  const int m = (int)u.size();
  const Eigen::VectorXd& ck = state.c[ki];
  const double rk = state.r[ki];
  double acc = 0.0;
  const double coord_mass = 1.0 - 2.0 * normal_cdf(-rk / hp.sigma0);
  for (int d = 0; d < m; ++d) {
    if (u(d) < ck(d) - rk || u(d) > ck(d) + rk) return -INFINITY;
    acc += log_normal_pdf(u(d), ck(d), hp.sigma0) - std::log(coord_mass);
  }
  return acc + log_inverse_wishart_pdf(sigma, hp.iw_df, hp.iw_scale);
}

// --- Predictive helpers ------------------------------------------------------------

double inverse_gamma_median(double shape, double scale) {
  struct Memo {
    double shape = -1.0, scale = -1.0, value = 0.0;
  };
  static thread_local Memo memo;
  if (memo.shape == shape && memo.scale == scale) return memo.value;
  const double t = inv_gammq(shape, 0.5);  // median of Gamma(shape, 1)
  const double med = scale / t;
  memo = {shape, scale, med};
  return med;
}

namespace {

// Predictive density of one observation coordinate under the base measure
// with the kernel variance plugged in at sbar2: the Gaussian kernel
// convolved against the truncated-normal location draw on [a, b].
double log_tn_convolution(double x, double center, double a, double b,
                          double sigma0, double sbar2) {
  const double v = sbar2 + sigma0 * sigma0;
  const double sstar = std::sqrt(sbar2 * sigma0 * sigma0 / v);
  const double mstar = (x * sigma0 * sigma0 + center * sbar2) / v;
  const double mass = truncated_normal_mass(center, sigma0, a, b);
  const double wedge = truncated_normal_mass(mstar, sstar, a, b);
  if (!(mass > 0.0) || !(wedge > 0.0)) return -INFINITY;
  return log_normal_pdf(x, center, std::sqrt(v)) + std::log(wedge) -
         std::log(mass);
}

// log of the residual-mass predictive kernel for component ki (0-based).
double log_residual_predictive(const ChainState& state, const Hyperparams& hp,
                               int ki, const double* x, int m) {
  if (m == 1) {
    if (hp.separation_axis == SeparationAxis::location) {
      const double ck = state.c[ki](0);
      const double rk = state.r[ki];
      const double sbar2 = inverse_gamma_median(hp.theta1, hp.theta2);
      return log_tn_convolution(x[0], ck, ck - rk, ck + rk, hp.sigma0, sbar2);
    }
    // Scale axis: clamp the plug-in variance into the component's sigma
    // interval; the location draw is untruncated.
    const double lo = std::max(state.c[ki](0) - state.r[ki], 0.0);
    const double hi = state.c[ki](0) + state.r[ki];
    double sbar2 = inverse_gamma_median(hp.theta1, hp.theta2);
    sbar2 = std::min(std::max(sbar2, lo * lo), hi * hi);
    const double loc =
        state.loc_mean.empty() ? hp.loc_mu0 : state.loc_mean[ki];
    const double v = sbar2 + hp.sigma0 * hp.sigma0;
    return log_normal_pdf(x[0], loc, std::sqrt(v));
  }
  // Multivariate: per-coordinate convolution with a scalar plug-in variance
  // from the inverse-Wishart mean's average diagonal. The off-diagonal
  // structure of the residual kernel is ignored; the residual mass this term
  // carries is below the slice threshold, so the approximation is mild.
  const double denom = (hp.iw_df > m + 1.0) ? (hp.iw_df - m - 1.0) : hp.iw_df;
  const double sbar2 = hp.iw_scale.diagonal().mean() / denom;
  const Eigen::VectorXd& ck = state.c[ki];
  const double rk = state.r[ki];
  double acc = 0.0;
  for (int d = 0; d < m; ++d) {
    acc += log_tn_convolution(x[d], ck(d), ck(d) - rk, ck(d) + rk, hp.sigma0,
                              sbar2);
  }
  return acc;
}

void accumulate_component_terms(const ChainState& state, const Hyperparams& hp,
                                int ki, const double* x, int m,
                                double log_weight, std::vector<double>* terms) {
  double beta_sum = 0.0;
  for (const Atom& a : state.atoms[ki]) {
    beta_sum += a.beta;
    if (a.beta <= 0.0) continue;
    terms->push_back(log_weight + std::log(a.beta) + a.log_kernel(x, m));
  }
  const double rem = 1.0 - beta_sum;
  if (rem > 1e-15) {
    const double pred = log_residual_predictive(state, hp, ki, x, m);
    if (pred > -INFINITY) {
      terms->push_back(log_weight + std::log(rem) + pred);
    }
  }
}

}  // namespace

double mixture_logpdf(const ChainState& state, const Hyperparams& hp,
                      const double* x, int m) {
  std::vector<double> terms;
  for (int ki = 0; ki < state.K(); ++ki) {
    const double wk = state.w(ki);
    if (!(wk > 0.0)) continue;
    accumulate_component_terms(state, hp, ki, x, m, std::log(wk), &terms);
  }
  if (state.w_bg > 0.0 && hp.background.has_value() &&
      hp.background->contains(x, m)) {
    terms.push_back(std::log(state.w_bg) - std::log(hp.background->volume()));
  }
  if (terms.empty()) return -INFINITY;
  return log_sum_exp(terms);
}

double component_logpdf(const ChainState& state, const Hyperparams& hp, int k,
                        const double* x, int m) {
  if (k < 1 || k > state.K()) {
    throw InvalidArgumentError("component_logpdf: component index out of range");
  }
  std::vector<double> terms;
  accumulate_component_terms(state, hp, k - 1, x, m, 0.0, &terms);
  if (terms.empty()) return -INFINITY;
  return log_sum_exp(terms);
}

}  // namespace npmix
