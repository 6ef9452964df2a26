#include "npmix/rngdist.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "npmix/errors.hpp"
#include "testutil.hpp"

using namespace npmix;

namespace {

// Inverse-gamma CDF: P(X <= x) = Q(shape, scale / x).
double inverse_gamma_cdf(double shape, double scale, double x) {
  return x <= 0.0 ? 0.0 : gammq(shape, scale / x);
}

}  // namespace

TEST_CASE("rng streams are deterministic and substreams draw-independent") {
  RngStream a(42, 7);
  RngStream b(42, 7);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  // A substream depends only on (seed, stream_id, tag), not on how many
  // draws the parent consumed.
  RngStream parent(1, 2);
  RngStream before = parent.substream(9);
  for (int i = 0; i < 5; ++i) (void)parent.uniform();
  RngStream after = parent.substream(9);
  for (int i = 0; i < 100; ++i) CHECK(before.next_u64() == after.next_u64());

  // Distinct stream ids decorrelate immediately.
  RngStream c(42, 8);
  RngStream d(42, 7);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("uniform draws live strictly inside their interval") {
  RngStream rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.0, 3.0);
    CHECK(u >= -2.0);
    CHECK(u <= 3.0);
  }
}

TEST_CASE("truncated normal: untruncated limit, half-normal mean, support") {
  RngStream rng(101);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    sum += sample_truncated_normal(0.0, 1.0, -1e9, 1e9, rng);
  }
  CHECK(std::fabs(sum / n) < 3.0 / std::sqrt((double)n));

  double half_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_truncated_normal(0.0, 1.0, 0.0, 1e9, rng);
    CHECK(x >= 0.0);
    half_sum += x;
  }
  CHECK(std::fabs(half_sum / n - std::sqrt(2.0 / kPi)) < 0.003);

  for (int i = 0; i < 20000; ++i) {
    const double x = sample_truncated_normal(5.0, 1.0, 0.0, 1.0, rng);
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
  // Deep in a tail the sampler must stay inside and finite.
  for (int i = 0; i < 5000; ++i) {
    const double x = sample_truncated_normal(0.0, 1.0, 8.0, 9.0, rng);
    CHECK(x >= 8.0);
    CHECK(x <= 9.0);
  }
  // Non-finite inputs signal upstream overflow, not caller misuse.
  CHECK_THROWS_AS(
      (void)sample_truncated_normal(NAN, 1.0, 0.0, 1.0, rng),
      NumericalError);
}

TEST_CASE("truncated normal matches the analytic truncated CDF") {
  RngStream rng(77);
  std::vector<double> draws(20000);
  const double lo = -0.5, hi = 2.0;
  for (auto& x : draws) x = sample_truncated_normal(1.0, 0.8, lo, hi, rng);
  const double flo = std_normal_cdf((lo - 1.0) / 0.8);
  const double fhi = std_normal_cdf((hi - 1.0) / 0.8);
  const double ks = testutil::ks_distance(draws, [&](double x) {
    return (std_normal_cdf((x - 1.0) / 0.8) - flo) / (fhi - flo);
  });
  CHECK(ks < 0.015);
}

TEST_CASE("inverse gamma moments and positivity") {
  RngStream rng(202);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_inverse_gamma(3.0, 2.0, rng);
  CHECK(std::fabs(sum / n - 1.0) < 0.01);  // mean = scale / (shape - 1)

  for (int i = 0; i < 10000; ++i) {
    CHECK(sample_inverse_gamma(2.0, 2.0, rng) > 0.0);
  }

  double sum2 = 0.0;
  for (int i = 0; i < n; ++i) sum2 += sample_inverse_gamma(3.0, 4.0, rng);
  CHECK(std::fabs(sum2 / n - 2.0) < 0.02);
}

TEST_CASE("truncated inverse gamma: no-op truncation and support") {
  RngStream rng(303);
  std::vector<double> truncated(100000), plain(100000);
  for (auto& x : truncated) {
    x = sample_truncated_inverse_gamma(3.0, 2.0, 0.0, INFINITY, rng);
  }
  for (auto& x : plain) x = sample_inverse_gamma(3.0, 2.0, rng);
  CHECK(testutil::ks_distance2(truncated, plain) < 0.01);
  // And against the analytic CDF.
  CHECK(testutil::ks_distance(truncated, [](double x) {
          return inverse_gamma_cdf(3.0, 2.0, x);
        }) < 0.01);

  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double x = sample_truncated_inverse_gamma(3.0, 2.0, 0.5, 1.5, rng);
    CHECK(x > 0.5);
    CHECK(x < 1.5);
  }
  for (int i = 0; i < 20000; ++i) {
    sum += sample_truncated_inverse_gamma(3.0, 2.0, 0.9, 1.1, rng);
  }
  const double m = sum / 20000.0;
  CHECK(m > 0.9);
  CHECK(m < 1.1);

  // Negligible interval mass fails loudly rather than looping.
  CHECK_THROWS_AS((void)sample_truncated_inverse_gamma(3.0, 2.0, 1e6, 1e6 + 1.0,
                                                       rng),
                  NumericalError);
}

TEST_CASE("dirichlet means, concentration, and simplex closure") {
  RngStream rng(404);
  const int n = 100000;
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto w = sample_dirichlet({1.0, 1.0}, rng);
    REQUIRE(w.size() == 2);
    double s = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
    m0 += w[0];
    m1 += w[1];
  }
  CHECK(std::fabs(m0 / n - 0.5) < 0.005);
  CHECK(std::fabs(m1 / n - 0.5) < 0.005);

  // Posterior-style concentration (1/3 + counts 5, 3, 2): mean alpha_i / 11.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto w =
        sample_dirichlet({1.0 / 3.0 + 5.0, 1.0 / 3.0 + 3.0, 1.0 / 3.0 + 2.0},
                         rng);
    s0 += w[0];
    s1 += w[1];
    s2 += w[2];
  }
  CHECK(std::fabs(s0 / n - 0.4848) < 0.005);
  CHECK(std::fabs(s1 / n - 0.3030) < 0.005);
  CHECK(std::fabs(s2 / n - 0.2121) < 0.005);

  for (int i = 0; i < 1000; ++i) {
    const auto w = sample_dirichlet({1e6, 1e6}, rng);
    CHECK(std::fabs(w[0] - 0.5) < 0.01);
  }
  CHECK_THROWS_AS((void)sample_dirichlet({1.0, 0.0}, rng),
                  InvalidArgumentError);
}

TEST_CASE("beta moments") {
  RngStream rng(505);
  const int n = 1000000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += sample_beta(1.0, 1.0, rng);
  CHECK(std::fabs(s / n - 0.5) < 0.002);

  s = 0.0;
  for (int i = 0; i < n; ++i) s += sample_beta(1.0, 4.0, rng);
  CHECK(std::fabs(s / n - 0.2) < 0.002);

  for (int i = 0; i < 10000; ++i) {
    const double b = sample_beta(2.0, 2.0, rng);
    CHECK(b > 0.0);
    CHECK(b < 1.0);
  }
}

TEST_CASE("gamma moments") {
  RngStream rng(606);
  const int n = 1000000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += sample_gamma(2.0, 1.0, rng);
  CHECK(std::fabs(s / n - 2.0) < 0.01);

  std::vector<double> expo(n);
  for (auto& x : expo) x = sample_gamma(1.0, 1.0, rng);
  CHECK(std::fabs(testutil::variance(expo) - 1.0) < 0.02);

  for (int i = 0; i < 10000; ++i) {
    CHECK(sample_gamma(5.0, 10.0, rng) > 0.0);
  }
  // Shape below 1 exercises the boosting branch.
  double small = 0.0;
  for (int i = 0; i < 200000; ++i) small += sample_gamma(0.5, 2.0, rng);
  CHECK(std::fabs(small / 200000.0 - 0.25) < 0.01);
}

TEST_CASE("inverse Wishart mean and definiteness") {
  RngStream rng(707);
  const SpdMatrix scale(4.0 * Eigen::MatrixXd::Identity(2, 2));
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, 2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const SpdMatrix draw = sample_inverse_wishart(7.0, scale, rng);
    if (i < 1000) {
      CHECK((draw.mat() - draw.mat().transpose()).norm() <=
            1e-12 * draw.mat().norm());
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(draw.mat());
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
    mean += draw.mat();
  }
  mean /= (double)n;
  // IW mean is scale / (df - m - 1) = 4 I / 4 = I.
  CHECK(std::fabs(mean(0, 0) - 1.0) < 0.05);
  CHECK(std::fabs(mean(1, 1) - 1.0) < 0.05);
  CHECK(std::fabs(mean(0, 1)) < 0.05);

  const SpdMatrix id = SpdMatrix::identity(2);
  for (int i = 0; i < 2000; ++i) {
    CHECK(sample_inverse_wishart(5.0, id, rng).mat().determinant() > 0.0);
  }
  CHECK_THROWS_AS((void)sample_inverse_wishart(0.5, id, rng),
                  InvalidArgumentError);
}

TEST_CASE("SpdMatrix validation") {
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(SpdMatrix{asym}, InvalidArgumentError);
  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(SpdMatrix{indef}, InvalidArgumentError);
  CHECK(SpdMatrix::identity(3).is_diagonal());
}

TEST_CASE("truncated MVN over a hypercube") {
  RngStream rng(808);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  const SpdMatrix id = SpdMatrix::identity(2);

  // Truncation inactive: mean recovers mu.
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sum += sample_truncated_mvn_hypercube(zero, id, zero, 10.0, rng);
  }
  CHECK(std::fabs(sum(0) / n) < 0.01);
  CHECK(std::fabs(sum(1) / n) < 0.01);

  // Support always holds, including on the correlated (Gibbs) path.
  Eigen::MatrixXd corr(2, 2);
  corr << 1.0, 0.5, 0.5, 1.0;
  const SpdMatrix sig(corr);
  Eigen::VectorXd center(2);
  center << 1.0, -1.0;
  for (int i = 0; i < 20000; ++i) {
    const Eigen::VectorXd x =
        sample_truncated_mvn_hypercube(zero, sig, center, 0.8, rng);
    CHECK((x - center).lpNorm<Eigen::Infinity>() <= 0.8 + 1e-12);
  }

  // Off-center mean: N((3,0), I) on the unit box pushes coordinate 1 right.
  Eigen::VectorXd mu(2);
  mu << 3.0, 0.0;
  double c0 = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const Eigen::VectorXd x =
        sample_truncated_mvn_hypercube(mu, id, zero, 1.0, rng);
    CHECK(std::fabs(x(0)) <= 1.0);
    c0 += x(0);
  }
  CHECK(c0 / 20000.0 > 0.5);

  // Correlated draws keep their correlation when truncation is loose.
  double sx = 0.0, sy = 0.0, sxy = 0.0, sxx = 0.0, syy = 0.0;
  const int nc = 40000;
  for (int i = 0; i < nc; ++i) {
    const Eigen::VectorXd x =
        sample_truncated_mvn_hypercube(zero, sig, zero, 12.0, rng);
    sx += x(0);
    sy += x(1);
    sxy += x(0) * x(1);
    sxx += x(0) * x(0);
    syy += x(1) * x(1);
  }
  const double cov = sxy / nc - (sx / nc) * (sy / nc);
  const double v0 = sxx / nc - (sx / nc) * (sx / nc);
  const double v1 = syy / nc - (sy / nc) * (sy / nc);
  CHECK(std::fabs(cov / std::sqrt(v0 * v1) - 0.5) < 0.05);
}

TEST_CASE("truncated normal mass and inverse CDF") {
  CHECK(truncated_normal_mass(0.0, 1.0, 0.0, INFINITY) ==
        doctest::Approx(0.5).epsilon(1e-13));
  CHECK(truncated_normal_mass(0.0, 1.0, -1.96, 1.96) ==
        doctest::Approx(0.950004209703559).epsilon(1e-9));
  CHECK(truncated_normal_mass(0.0, 1.0, -INFINITY, INFINITY) ==
        doctest::Approx(1.0));
  // Median of a symmetric interval is the mean.
  CHECK(truncated_normal_icdf(2.0, 1.5, -1.0, 5.0, 0.5) ==
        doctest::Approx(2.0).epsilon(1e-10));
  // Round trip through the truncated CDF.
  const double x = truncated_normal_icdf(0.0, 1.0, -1.0, 2.0, 0.3);
  const double mass_below = truncated_normal_mass(0.0, 1.0, -1.0, x) /
                            truncated_normal_mass(0.0, 1.0, -1.0, 2.0);
  CHECK(mass_below == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("sampling is reproducible across repeated runs") {
  auto draw_sequence = [](std::uint64_t seed) {
    RngStream rng(seed, 3);
    std::vector<double> out;
    for (int i = 0; i < 50; ++i) {
      out.push_back(sample_normal(0.0, 1.0, rng));
      out.push_back(sample_gamma(2.0, 2.0, rng));
      out.push_back(sample_beta(1.0, 4.0, rng));
      out.push_back(sample_inverse_gamma(3.0, 2.0, rng));
      out.push_back(sample_truncated_normal(0.0, 1.0, -1.0, 1.0, rng));
    }
    return out;
  };
  const auto a = draw_sequence(99);
  const auto b = draw_sequence(99);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(draw_sequence(100) != a);
}
