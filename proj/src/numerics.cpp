#include "npmix/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "npmix/errors.hpp"

namespace npmix {

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double std_normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
}

double log_normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * kLog2Pi;
}

double normal_cdf(double x) { return std_normal_cdf(x); }

// Wichura (1988), algorithm AS 241, PPND16. Relative error ~1e-16 on (0,1).
double inv_std_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -INFINITY;
    if (p == 1.0) return INFINITY;
    throw InvalidArgumentError("inv_std_normal_cdf: p outside [0,1]");
  }
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    const double num =
        q * (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                   6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
               1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return num / den;
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
            3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return (q < 0.0) ? -val : val;
}

namespace {

// Series expansion of P(a,x), valid (and fast) for x < a+1.
double gammp_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a,x), valid for x >= a+1.
double gammq_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gammp(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a)) {
    throw InvalidArgumentError("gammp: need a > 0, x >= 0");
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return (x < a + 1.0) ? gammp_series(a, x) : 1.0 - gammq_cf(a, x);
}

double gammq(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a)) {
    throw InvalidArgumentError("gammq: need a > 0, x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return (x < a + 1.0) ? 1.0 - gammp_series(a, x) : gammq_cf(a, x);
}

double inv_gammq(double a, double q) {
  if (!(a > 0.0) || !(q >= 0.0 && q <= 1.0)) {
    throw InvalidArgumentError("inv_gammq: need a > 0, q in [0,1]");
  }
  if (q >= 1.0) return 0.0;
  if (q <= 0.0) return INFINITY;
  // Bracket the root; Q(a, .) decreases from 1 to 0.
  double lo = 0.0;
  double hi = std::max(4.0 * a, 8.0);
  while (gammq(a, hi) > q) {
    hi *= 2.0;
    if (hi > 1e300) throw NumericalError("inv_gammq: bracket overflow");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gammq(a, mid) > q) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

double log_choose(int n, int k) {
  if (k < 0 || k > n) throw InvalidArgumentError("log_choose: k outside [0,n]");
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) return -INFINITY;
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

const GaussLegendreRule& gauss_legendre_rule(int n) {
  if (n < 1) throw InvalidArgumentError("gauss_legendre_rule: n >= 1 required");
  static std::mutex mu;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Tricomi's initial guess for the i-th root of P_n, refined by Newton.
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  auto [pos, inserted] = cache.emplace(n, std::move(rule));
  (void)inserted;
  return pos->second;
}

double gauss_legendre(const std::function<double(double)>& f, double a,
                      double b, int n) {
  const GaussLegendreRule& rule = gauss_legendre_rule(n);
  const double mid = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    sum += rule.weights[i] * f(mid + hw * rule.nodes[i]);
  }
  return sum * hw;
}

namespace {

double adaptive_gl_rec(const std::function<double(double)>& f, double a,
                       double b, double whole, double tol, int depth) {
  const double mid = 0.5 * (a + b);
  const double left = gauss_legendre(f, a, mid, 15);
  const double right = gauss_legendre(f, mid, b, 15);
  const double delta = left + right - whole;
  if (std::fabs(delta) <= tol || (b - a) < 1e-14 * std::max(1.0, std::fabs(a))) {
    return left + right;
  }
  if (depth <= 0) {
    throw NumericalError("adaptive quadrature failed to converge");
  }
  return adaptive_gl_rec(f, a, mid, left, 0.5 * tol, depth - 1) +
         adaptive_gl_rec(f, mid, b, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_gauss_legendre(const std::function<double(double)>& f,
                               double a, double b, double abs_tol,
                               int max_depth) {
  if (!(b > a)) {
    if (a == b) return 0.0;
    throw InvalidArgumentError("adaptive_gauss_legendre: b < a");
  }
  // Seed with a few panels so sign cancellation inside one panel cannot fool
  // the error estimate on oscillatory integrands.
  const int seed_panels = 8;
  const double w = (b - a) / seed_panels;
  double total = 0.0;
  for (int i = 0; i < seed_panels; ++i) {
    const double pa = a + i * w;
    const double pb = (i + 1 == seed_panels) ? b : pa + w;
    const double whole = gauss_legendre(f, pa, pb, 15);
    total += adaptive_gl_rec(f, pa, pb, whole, abs_tol / seed_panels, max_depth);
  }
  return total;
}

double bvn_cdf(double h, double k, double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) {
    throw InvalidArgumentError("bvn_cdf: correlation outside [-1,1]");
  }
  if (std::isinf(h) || std::isinf(k)) {
    if (h == -INFINITY || k == -INFINITY) return 0.0;
    if (h == INFINITY) return std_normal_cdf(k);
    return std_normal_cdf(h);
  }
  if (rho >= 1.0) return std_normal_cdf(std::min(h, k));
  if (rho <= -1.0) {
    return std::max(0.0, std_normal_cdf(h) + std_normal_cdf(k) - 1.0);
  }
  // Plackett: dF/drho is the bivariate density; substituting t = sin(theta)
  // gives a bounded smooth integrand over [0, asin(rho)].
  const double base = std_normal_cdf(h) * std_normal_cdf(k);
  if (rho == 0.0) return base;
  const double hk = h * k;
  const double hh = h * h + k * k;
  auto integrand = [&](double theta) {
    const double st = std::sin(theta);
    const double ct2 = std::cos(theta) * std::cos(theta);
    return std::exp(-(hh - 2.0 * st * hk) / (2.0 * ct2));
  };
  const double upper = std::asin(rho);
  const double corr = adaptive_gauss_legendre(
                          integrand, std::min(0.0, upper), std::max(0.0, upper),
                          1e-10) *
                      ((upper >= 0.0) ? 1.0 : -1.0);
  return base + corr / (2.0 * kPi);
}

double empirical_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) {
    throw InvalidArgumentError("empirical_quantile: empty sample");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidArgumentError("empirical_quantile: p outside [0,1]");
  }
  const std::size_t n = sorted.size();
  const double h = p * n;
  if (h <= 0.0) return sorted.front();
  if (h >= static_cast<double>(n)) return sorted.back();
  const double eps = 1e-9;
  const double nearest = std::round(h);
  if (std::fabs(h - nearest) < eps && nearest >= 1.0 &&
      nearest <= static_cast<double>(n - 1)) {
    const std::size_t i = static_cast<std::size_t>(nearest);
    return 0.5 * (sorted[i - 1] + sorted[i]);
  }
  const std::size_t i = static_cast<std::size_t>(std::ceil(h));
  return sorted[std::min(i, n) - 1];
}

double trapezoid(const std::vector<double>& grid,
                 const std::vector<double>& values) {
  if (grid.size() != values.size() || grid.size() < 2) {
    throw InvalidArgumentError("trapezoid: grid/value size mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    sum += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
  }
  return sum;
}

}  // namespace npmix
