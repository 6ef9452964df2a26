#include "npmix/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "npmix/errors.hpp"
#include "npmix/hermite.hpp"
#include "npmix/numerics.hpp"

namespace npmix {

namespace {

Eigen::VectorXd scalar_vec(double x) {
  Eigen::VectorXd v(1);
  v(0) = x;
  return v;
}

}  // namespace

void SyntheticTruth::validate() const {
  if (weights.size() != components.size() || components.empty()) {
    throw InvalidArgumentError("SyntheticTruth: weights/components mismatch");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgumentError("SyntheticTruth: weights must be >= 0");
    }
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw InvalidArgumentError("SyntheticTruth: weights must sum to 1");
  }
  for (const auto& c : components) {
    if (c.dim != components[0].dim || !c.pdf || !c.sample) {
      throw InvalidArgumentError(
          "SyntheticTruth: components must share a dimension and be complete");
    }
  }
}

double SyntheticTruth::pdf(const Eigen::VectorXd& x) const {
  double f = 0.0;
  for (size_t i = 0; i < components.size(); ++i) {
    f += weights[i] * components[i].pdf(x);
  }
  return f;
}

double SyntheticTruth::pdf1(double x) const { return pdf(scalar_vec(x)); }

SeparationReport SyntheticTruth::separation_report(double gap) const {
  if (dim() != 1) {
    throw InvalidArgumentError(
        "SyntheticTruth: separation report requires univariate components");
  }
  std::vector<FiniteSupportSet> supports;
  for (const auto& c : components) {
    if (!std::isfinite(c.support_lo) || !std::isfinite(c.support_hi)) {
      throw InvalidArgumentError(
          "SyntheticTruth: component has no recorded support interval");
    }
    supports.push_back(
        FiniteSupportSet(std::vector<double>{c.support_lo, c.support_hi}));
  }
  return check_separation_C2(supports, gap);
}

// --- Hermite-combination density -------------------------------------------------

SyntheticComponent hermite_random_density(double center, double halfwidth,
                                          int degree, std::uint64_t seed) {
  if (!(halfwidth > 0.0) || degree < 0) {
    throw InvalidArgumentError(
        "hermite_random_density: halfwidth must be > 0 and degree >= 0");
  }
  // The basis scale shrinks with the degree so the combination stays inside
  // roughly center +- halfwidth before kernel spread.
  const double s = halfwidth / std::sqrt(2.0 * degree + 1.0);
  const double reach = halfwidth + 12.0 * s;

  RngStream rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> coef(degree + 1);
    for (int j = 0; j <= degree; ++j) {
      coef[j] = sample_normal(0.0, std::sqrt(std::pow(0.5, j)), rng);
    }
    auto raw_pos = [center, s, coef](double x) {
      double f = 0.0;
      for (size_t j = 0; j < coef.size(); ++j) {
        f += coef[j] * psi((int)j, center, s, x);
      }
      return std::max(f, 0.0);
    };
    double norm;
    try {
      norm = adaptive_gauss_legendre(raw_pos, center - reach, center + reach,
                                     1e-10);
    } catch (const NumericalError&) {
      continue;
    }
    if (!(norm > 1e-8) || !std::isfinite(norm)) continue;

    // Envelope for the rejection sampler from a dense scan.
    double peak = 0.0;
    for (int i = 0; i <= 4096; ++i) {
      const double x = center - reach + 2.0 * reach * i / 4096.0;
      peak = std::max(peak, raw_pos(x) / norm);
    }
    const double envelope = 1.05 * peak;
    if (!(envelope > 0.0)) continue;

    SyntheticComponent out;
    out.dim = 1;
    // Effective support: the basis functions carry no appreciable mass
    // beyond about 5 scale units past the nominal halfwidth.
    out.support_lo = center - (halfwidth + 5.0 * s);
    out.support_hi = center + (halfwidth + 5.0 * s);
    out.pdf = [raw_pos, norm](const Eigen::VectorXd& x) {
      return raw_pos(x(0)) / norm;
    };
    const double lo = center - reach, hi = center + reach;
    out.sample = [raw_pos, norm, envelope, lo, hi](RngStream& r) {
      for (int tries = 0; tries < 1000000; ++tries) {
        const double x = r.uniform(lo, hi);
        if (r.uniform(0.0, envelope) < raw_pos(x) / norm) return scalar_vec(x);
      }
      throw NumericalError("hermite_random_density: rejection sampler stalled");
    };
    return out;
  }
  throw DegenerateEstimateError(
      "hermite_random_density: positive part degenerate after 100 seeds");
}

// --- Laplace ------------------------------------------------------------------------

SyntheticComponent laplace_density(double mu, double b) {
  if (!(b > 0.0)) {
    throw InvalidArgumentError("laplace_density: scale must be > 0");
  }
  SyntheticComponent out;
  out.dim = 1;
  // Quantile span covering all but 1e-4 of the mass: F^-1(1 - 5e-5).
  const double span = -b * std::log(1e-4);
  out.support_lo = mu - span;
  out.support_hi = mu + span;
  out.pdf = [mu, b](const Eigen::VectorXd& x) {
    return std::exp(-std::fabs(x(0) - mu) / b) / (2.0 * b);
  };
  out.sample = [mu, b](RngStream& r) {
    const double u = r.uniform() - 0.5;
    const double mag = -b * std::log(std::max(1.0 - 2.0 * std::fabs(u), 1e-300));
    return scalar_vec(u >= 0.0 ? mu + mag : mu - mag);
  };
  return out;
}

// --- epsilon-skew exponential power -----------------------------------------------

SyntheticComponent skew_exp_power_density(double mu, double alpha,
                                          double beta_shape, double skew) {
  if (!(alpha > 0.0) || !(beta_shape > 0.0) || !(std::fabs(skew) < 1.0)) {
    throw InvalidArgumentError(
        "skew_exp_power_density: need alpha > 0, beta_shape > 0, |skew| < 1");
  }
  // Symmetric base: g(t) = beta * exp(-|t|^beta) / (2 Gamma(1/beta)).
  const double log_norm =
      std::log(beta_shape) - std::log(2.0 * alpha) - std::lgamma(1.0 / beta_shape);

  SyntheticComponent out;
  out.dim = 1;
  // |T|^beta ~ Gamma(1/beta, 1); bound |T| by the 1 - 5e-5 gamma quantile.
  const double g_hi = inv_gammq(1.0 / beta_shape, 5e-5);
  const double t_hi = std::pow(g_hi, 1.0 / beta_shape);
  out.support_lo = mu - alpha * (1.0 + skew) * t_hi;
  out.support_hi = mu + alpha * (1.0 - skew) * t_hi;
  out.pdf = [mu, alpha, beta_shape, skew, log_norm](const Eigen::VectorXd& xv) {
    const double x = xv(0);
    const double side = (x >= mu) ? (1.0 - skew) : (1.0 + skew);
    const double t = std::fabs(x - mu) / (alpha * side);
    return std::exp(log_norm - std::pow(t, beta_shape));
  };
  out.sample = [mu, alpha, beta_shape, skew](RngStream& r) {
    const bool right = r.uniform() < 0.5 * (1.0 - skew);
    const double g = sample_gamma(1.0 / beta_shape, 1.0, r);
    const double mag = std::pow(g, 1.0 / beta_shape);
    const double x = right ? mu + alpha * (1.0 - skew) * mag
                           : mu - alpha * (1.0 + skew) * mag;
    return scalar_vec(x);
  };
  return out;
}

// --- Gaussian -----------------------------------------------------------------------

SyntheticComponent gaussian_density(double mu, double sigma) {
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError("gaussian_density: sigma must be > 0");
  }
  SyntheticComponent out;
  out.dim = 1;
  out.support_lo = mu - 4.5 * sigma;
  out.support_hi = mu + 4.5 * sigma;
  out.pdf = [mu, sigma](const Eigen::VectorXd& x) {
    return normal_pdf(x(0), mu, sigma);
  };
  out.sample = [mu, sigma](RngStream& r) {
    return scalar_vec(sample_normal(mu, sigma, r));
  };
  return out;
}

// --- circle GMM ---------------------------------------------------------------------

SyntheticComponent gmm_on_circle(const Eigen::Vector2d& center, double radius,
                                 int n_atoms, double cov_scale,
                                 std::uint64_t seed) {
  if (n_atoms < 1 || !(radius >= 0.0) || !(cov_scale > 0.0)) {
    throw InvalidArgumentError(
        "gmm_on_circle: need n_atoms >= 1, radius >= 0, cov_scale > 0");
  }
  RngStream rng(seed);
  auto means = std::make_shared<std::vector<Eigen::Vector2d>>();
  auto chols = std::make_shared<std::vector<Eigen::Matrix2d>>();
  auto precs = std::make_shared<std::vector<Eigen::Matrix2d>>();
  auto log_norms = std::make_shared<std::vector<double>>();
  for (int l = 0; l < n_atoms; ++l) {
    const double angle = 2.0 * kPi * l / n_atoms;
    means->push_back(center + radius * Eigen::Vector2d(std::cos(angle),
                                                       std::sin(angle)));
    const double l1 = rng.uniform(cov_scale / 4.0, cov_scale);
    const double l2 = rng.uniform(cov_scale / 4.0, cov_scale);
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const Eigen::Matrix2d cov =
        rot * Eigen::Vector2d(l1, l2).asDiagonal() * rot.transpose();
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    chols->push_back(llt.matrixL());
    precs->push_back(llt.solve(Eigen::Matrix2d::Identity()));
    log_norms->push_back(-kLog2Pi - 0.5 * std::log(cov.determinant()));
  }

  SyntheticComponent out;
  out.dim = 2;
  out.pdf = [means, precs, log_norms](const Eigen::VectorXd& x) {
    double f = 0.0;
    for (size_t l = 0; l < means->size(); ++l) {
      const Eigen::Vector2d d = x.head<2>() - (*means)[l];
      f += std::exp((*log_norms)[l] - 0.5 * d.dot((*precs)[l] * d));
    }
    return f / (double)means->size();
  };
  out.sample = [means, chols](RngStream& r) {
    const size_t pick = std::min(
        means->size() - 1, (size_t)(r.uniform() * (double)means->size()));
    Eigen::Vector2d z(sample_normal(0.0, 1.0, r), sample_normal(0.0, 1.0, r));
    Eigen::VectorXd x = (*means)[pick] + (*chols)[pick] * z;
    return x;
  };
  return out;
}

// --- mixture sampling ---------------------------------------------------------------

LabeledSample sample_mixture(const SyntheticTruth& truth, long long n,
                             std::uint64_t seed) {
  truth.validate();
  if (n < 0) throw InvalidArgumentError("sample_mixture: n must be >= 0");
  const int m = truth.dim();

  LabeledSample out;
  out.data.x.resize(n, m);
  out.data.columns.resize(m);
  for (int d = 0; d < m; ++d) {
    out.data.columns[d] = "x" + std::to_string(d + 1);
  }
  out.labels.resize(n);

  RngStream rng(seed);
  for (long long i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double cum = 0.0;
    int label = (int)truth.weights.size() - 1;
    for (size_t k = 0; k < truth.weights.size(); ++k) {
      cum += truth.weights[k];
      if (u <= cum) {
        label = (int)k;
        break;
      }
    }
    out.labels[i] = label;
    out.data.x.row(i) = truth.components[label].sample(rng).transpose();
  }
  return out;
}

}  // namespace npmix
