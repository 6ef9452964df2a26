#include "npmix/sampler.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "npmix/errors.hpp"
#include "npmix/model.hpp"
#include "npmix/numerics.hpp"
#include "npmix/rngdist.hpp"
#include "testutil.hpp"

using namespace npmix;

namespace {

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v(0) = x;
  return v;
}

Hyperparams make_hp(int K) {
  Hyperparams hp;
  hp.K = K;
  hp.finalize(1);
  return hp;
}

Atom make_atom(double u, double sigma2, double beta) {
  Atom a;
  a.u = vec1(u);
  a.sigma2 = sigma2;
  a.beta = beta;
  a.refresh_cache();
  return a;
}

// Hand-built univariate state with valid slice auxiliaries. All observations
// are labeled (component `zval`, atom 0) unless relabeled afterwards.
ChainState make_state(std::vector<double> centers, std::vector<double> radii,
                      std::vector<std::vector<Atom>> atoms, int n_obs,
                      int zval = 1) {
  ChainState st;
  const int K = (int)centers.size();
  st.w = Eigen::VectorXd::Constant(K, 1.0 / K);
  for (double c : centers) st.c.push_back(vec1(c));
  st.r = std::move(radii);
  st.atoms = std::move(atoms);
  st.z.assign(n_obs, zval);
  st.s.assign(n_obs, 0);
  for (int k = 0; k < K; ++k) {
    st.rho_star_kj.emplace_back(st.atoms[k].size(), 0.01);
    st.i_star_kj.emplace_back(st.atoms[k].size(), -1);
  }
  st.rho_star = 0.01;
  st.xi = 0.5;
  return st;
}

Dataset make_data(const std::vector<double>& xs) {
  Dataset d;
  d.x.resize((int)xs.size(), 1);
  for (size_t i = 0; i < xs.size(); ++i) d.x((int)i, 0) = xs[i];
  d.columns = {"x1"};
  return d;
}

// n draws from a symmetric two-component normal mixture; labels returned.
Dataset two_component_data(int n, double sep, double sd, std::uint64_t seed,
                           std::vector<int>* labels = nullptr) {
  RngStream g(seed);
  Dataset d;
  d.x.resize(n, 1);
  d.columns = {"x1"};
  for (int i = 0; i < n; ++i) {
    const int comp = g.uniform() < 0.5 ? 0 : 1;
    d.x(i, 0) = sample_normal(comp == 0 ? -sep : sep, sd, g);
    if (labels) labels->push_back(comp);
  }
  return d;
}

void check_state_invariants(const ChainState& st, const Hyperparams& hp) {
  const int K = st.K();
  CHECK(st.w.size() == K);
  double wsum = st.w_bg;
  for (int k = 0; k < K; ++k) {
    CHECK(st.w(k) >= 0.0);
    wsum += st.w(k);
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(st.rho_star > 0.0);
  CHECK(st.rho_star <= 1.0);
  if (K >= 2) CHECK(min_region_gap(st.c, st.r) > 0.0);
  for (int k = 0; k < K; ++k) {
    CHECK(st.r[k] > 0.0);
    double beta_sum = 0.0;
    for (const Atom& a : st.atoms[k]) {
      CHECK(a.beta >= 0.0);
      beta_sum += a.beta;
      CHECK(a.sigma2 > 0.0);
      if (hp.separation_axis == SeparationAxis::location) {
        CHECK(std::fabs(a.u(0) - st.c[k](0)) <= st.r[k] + 1e-12);
      }
    }
    CHECK(beta_sum <= 1.0 + 1e-12);
  }
  for (size_t i = 0; i < st.z.size(); ++i) {
    CHECK(st.z[i] >= (hp.background.has_value() ? 0 : 1));
    CHECK(st.z[i] <= K);
    if (st.z[i] >= 1) {
      CHECK(st.s[i] >= 0);
      CHECK(st.s[i] < (int)st.atoms[st.z[i] - 1].size());
      CHECK(st.atoms[st.z[i] - 1][st.s[i]].beta > 0.0);
    }
  }
}

bool states_identical(const ChainState& a, const ChainState& b) {
  if (a.K() != b.K() || a.z != b.z || a.s != b.s) return false;
  if (a.w.size() != b.w.size()) return false;
  for (int k = 0; k < a.w.size(); ++k) {
    if (a.w(k) != b.w(k)) return false;
  }
  if (a.w_bg != b.w_bg || a.rho_star != b.rho_star || a.xi != b.xi) {
    return false;
  }
  for (int k = 0; k < a.K(); ++k) {
    if (a.c[k](0) != b.c[k](0) || a.r[k] != b.r[k]) return false;
    if (a.atoms[k].size() != b.atoms[k].size()) return false;
    for (size_t j = 0; j < a.atoms[k].size(); ++j) {
      const Atom& x = a.atoms[k][j];
      const Atom& y = b.atoms[k][j];
      if (x.u(0) != y.u(0) || x.sigma2 != y.sigma2 || x.beta != y.beta) {
        return false;
      }
    }
    if (a.rho_star_kj[k] != b.rho_star_kj[k]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("conjugate posterior helpers match hand formulas") {
  // Atom-mean update: prior center 0, spread 1, kernel variance 1, data
  // {1, 2}.
  NormalPosterior p = conjugate_normal_posterior(0.0, 1.0, 1.0, 3.0, 2);
  CHECK(p.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.sd == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));

  // Region-center update with atom means {1, 1}.
  NormalPosterior q = conjugate_normal_posterior(0.0, 1.0, 1.0, 2.0, 2);
  CHECK(q.mean == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(q.sd == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));

  // No observations: prior returned unchanged.
  NormalPosterior none = conjugate_normal_posterior(0.7, 1.3, 2.0, 0.0, 0);
  CHECK(none.mean == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(none.sd == doctest::Approx(1.3).epsilon(1e-12));

  InverseGammaPosterior ig = inverse_gamma_posterior(2.0, 1.0, 2, 0.0);
  CHECK(ig.shape == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(ig.scale == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> alpha =
      dirichlet_posterior(1.0 / 3.0, {5, 3, 2});
  REQUIRE(alpha.size() == 3);
  CHECK(alpha[0] == doctest::Approx(16.0 / 3.0).epsilon(1e-12));
  CHECK(alpha[1] == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  CHECK(alpha[2] == doctest::Approx(7.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(conjugate_normal_posterior(0.0, 0.0, 1.0, 0.0, 1),
                  InvalidArgumentError);
  CHECK_THROWS_AS(inverse_gamma_posterior(0.0, 1.0, 1, 0.0),
                  InvalidArgumentError);
  CHECK_THROWS_AS(dirichlet_posterior(0.0, {1}), InvalidArgumentError);
}

TEST_CASE("repulsion gap floor") {
  Hyperparams hp = make_hp(2);  // tau = 1, nu = 2
  CHECK(repulsion_gap_floor(0.0, hp) == 0.0);
  // xi = exp(-1/64) inverts back to the gap 8 that produced it.
  CHECK(repulsion_gap_floor(std::exp(-1.0 / 64.0), hp) ==
        doctest::Approx(8.0).epsilon(1e-12));
  CHECK(repulsion_gap_floor(0.9, hp) > repulsion_gap_floor(0.5, hp));
}

TEST_CASE("extend_atoms grows sticks to the slice threshold") {
  Hyperparams hp = make_hp(1);
  ChainState st = make_state(
      {0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.6), make_atom(0.5, 1.0, 0.3)}}, 0);
  st.rho_star = 0.05;
  extend_atoms(st, hp, 1, RngStream(11));
  REQUIRE(st.atoms[0].size() >= 3);
  double beta_sum = 0.0;
  for (const Atom& a : st.atoms[0]) {
    beta_sum += a.beta;
    CHECK(a.beta > 0.0);
    CHECK(std::fabs(a.u(0)) <= st.r[0] + 1e-12);
    CHECK(a.sigma2 > 0.0);
  }
  CHECK(1.0 - beta_sum < 0.05);
  CHECK(st.rho_star_kj[0].size() == st.atoms[0].size());
  CHECK(st.i_star_kj[0].size() == st.atoms[0].size());

  // Remainder already below the threshold: no-op.
  ChainState st2 = make_state(
      {0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.6), make_atom(0.5, 1.0, 0.3)}}, 0);
  st2.rho_star = 0.2;
  extend_atoms(st2, hp, 1, RngStream(12));
  CHECK(st2.atoms[0].size() == 2);

  ChainState bad = make_state({0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.9)}}, 0);
  bad.rho_star = 1.5;
  CHECK_THROWS_AS(extend_atoms(bad, hp, 1, RngStream(1)),
                  InvalidArgumentError);
  bad.rho_star = 0.5;
  CHECK_THROWS_AS(extend_atoms(bad, hp, 2, RngStream(1)),
                  InvalidArgumentError);
}

TEST_CASE("label draws: trivial and dominance cases") {
  Hyperparams hp = make_hp(1);
  SweepPlan plan;
  const Dataset data = make_data({-0.4, 0.1, 0.3, 1.2, -2.0});

  // One component, one atom with beta = 1: labels are forced.
  ChainState st = make_state({0.0}, {5.0}, {{make_atom(0.0, 1.0, 1.0)}},
                             data.n());
  const double ll = draw_slice_and_labels(st, hp, data, plan, RngStream(3));
  for (int i = 0; i < data.n(); ++i) {
    CHECK(st.z[i] == 1);
    CHECK(st.s[i] == 0);
  }
  double expect = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    expect += mixture_logpdf(st, hp, data.row(i), 1);
  }
  CHECK(ll == doctest::Approx(expect).epsilon(1e-12));

  // Two identical components, weight mass entirely on the first.
  Hyperparams hp2 = make_hp(2);
  ChainState dom = make_state(
      {-3.0, 3.0}, {1.0, 1.0},
      {{make_atom(-3.0, 1.0, 1.0)}, {make_atom(3.0, 1.0, 1.0)}}, 1);
  dom.w(0) = 1.0 - 1e-12;
  dom.w(1) = 1e-12;
  const Dataset x0 = make_data({0.0});
  for (int t = 0; t < 200; ++t) {
    draw_slice_and_labels(dom, hp2, x0, plan, RngStream(100 + t));
    CHECK(dom.z[0] == 1);
  }
}

TEST_CASE("label draw is symmetric between equidistant components") {
  Hyperparams hp = make_hp(2);
  SweepPlan plan;
  ChainState st = make_state(
      {-3.0, 3.0}, {1.0, 1.0},
      {{make_atom(-3.0, 1.0, 1.0)}, {make_atom(3.0, 1.0, 1.0)}}, 1);
  const Dataset x0 = make_data({0.0});
  RngStream root(77);
  const int reps = 40000;
  long long ones = 0;
  for (int t = 0; t < reps; ++t) {
    draw_slice_and_labels(st, hp, x0, plan, root.substream(t));
    if (st.z[0] == 1) ++ones;
  }
  CHECK(std::fabs((double)ones / reps - 0.5) < 0.01);
}

TEST_CASE("weight update posterior moments") {
  SweepPlan plan;
  (void)plan;

  // K = 2, conc 0.5, all 100 observations in component 1.
  Hyperparams hp = make_hp(2);
  hp.dirichlet_conc = 0.5;
  ChainState st = make_state(
      {-3.0, 3.0}, {1.0, 1.0},
      {{make_atom(-3.0, 1.0, 1.0)}, {make_atom(3.0, 1.0, 1.0)}}, 100);
  RngStream root(21);
  double acc = 0.0;
  const int reps = 20000;
  for (int t = 0; t < reps; ++t) {
    update_weights(st, hp, root.substream(t));
    acc += st.w(0);
    CHECK(st.w(0) + st.w(1) == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(acc / reps == doctest::Approx(100.5 / 101.0).epsilon(0.002));

  // Counts (5, 3, 2) with conc 1/3: Dirichlet(16/3, 10/3, 7/3) means.
  Hyperparams hp3 = make_hp(3);
  hp3.dirichlet_conc = 1.0 / 3.0;
  ChainState st3 = make_state(
      {-5.0, 0.0, 5.0}, {1.0, 1.0, 1.0},
      {{make_atom(-5.0, 1.0, 1.0)}, {make_atom(0.0, 1.0, 1.0)},
       {make_atom(5.0, 1.0, 1.0)}},
      10);
  for (int i = 0; i < 10; ++i) st3.z[i] = i < 5 ? 1 : (i < 8 ? 2 : 3);
  Eigen::Vector3d mean3 = Eigen::Vector3d::Zero();
  for (int t = 0; t < reps; ++t) {
    update_weights(st3, hp3, root.substream(100000 + t));
    mean3 += st3.w;
  }
  mean3 /= reps;
  CHECK(mean3(0) == doctest::Approx(0.4848).epsilon(0.012));
  CHECK(mean3(1) == doctest::Approx(0.3030).epsilon(0.016));
  CHECK(mean3(2) == doctest::Approx(0.2121).epsilon(0.022));

  // No observations: a prior draw, still a simplex.
  ChainState st0 = make_state(
      {-3.0, 3.0}, {1.0, 1.0},
      {{make_atom(-3.0, 1.0, 1.0)}, {make_atom(3.0, 1.0, 1.0)}}, 0);
  double prior_mean = 0.0;
  for (int t = 0; t < 4000; ++t) {
    update_weights(st0, hp, root.substream(200000 + t));
    CHECK(st0.w(0) > 0.0);
    CHECK(st0.w(0) + st0.w(1) == doctest::Approx(1.0).epsilon(1e-9));
    prior_mean += st0.w(0);
  }
  CHECK(prior_mean / 4000 == doctest::Approx(0.5).epsilon(0.06));

  // With a background window the background weight joins the simplex.
  Hyperparams hpb;
  hpb.K = 1;
  hpb.background = Window{vec1(-10.0), vec1(10.0)};
  hpb.finalize(1);
  ChainState stb = make_state({0.0}, {1.0}, {{make_atom(0.0, 1.0, 1.0)}}, 20);
  for (int i = 10; i < 20; ++i) stb.z[i] = 0;  // background labels
  update_weights(stb, hpb, root.substream(300000));
  CHECK(stb.w_bg > 0.0);
  CHECK(stb.w(0) + stb.w_bg == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("atom update: conjugate location and variance") {
  Hyperparams hp = make_hp(1);
  SweepPlan plan;
  const Dataset data = make_data({1.0, 2.0});
  RngStream root(31);

  // Posterior of u given sigma2 = 1 is N(1, 1/3) on [-5, 5]; the truncation
  // is negligible, so the empirical mean identifies the conjugate formula.
  double usum = 0.0;
  const int reps = 5000;
  ChainState st = make_state({0.0}, {5.0}, {{make_atom(0.0, 1.0, 1.0)}}, 2);
  for (int t = 0; t < reps; ++t) {
    st.atoms[0][0] = make_atom(0.0, 1.0, 1.0);
    update_atoms(st, hp, data, plan, root.substream(t));
    CHECK(std::fabs(st.atoms[0][0].u(0)) <= 5.0 + 1e-12);
    CHECK(st.atoms[0][0].sigma2 > 0.0);
    usum += st.atoms[0][0].u(0);
  }
  CHECK(usum / reps == doctest::Approx(1.0).epsilon(0.03));

  // A large cluster pins the kernel variance near the truth.
  RngStream g(5);
  std::vector<double> xs(2000);
  for (double& v : xs) v = sample_normal(0.0, 1.0, g);
  const Dataset big = make_data(xs);
  ChainState stb = make_state({0.0}, {5.0}, {{make_atom(0.0, 2.0, 1.0)}},
                              big.n());
  update_atoms(stb, hp, big, plan, root.substream(999999));
  CHECK(stb.atoms[0][0].sigma2 > 0.8);
  CHECK(stb.atoms[0][0].sigma2 < 1.25);

  // Empty clusters refresh from the base measure and keep their stick mass.
  ChainState ste = make_state(
      {0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.7), make_atom(0.5, 1.0, 0.2)}}, 2);
  for (int t = 0; t < 200; ++t) {
    ste.atoms[0][1].u(0) = 99.0;  // overwritten by the refresh
    update_atoms(ste, hp, data, plan, root.substream(500000 + t));
    CHECK(ste.atoms[0][1].beta == doctest::Approx(0.2));
    CHECK(std::fabs(ste.atoms[0][1].u(0)) <= 2.0 + 1e-12);
    CHECK(ste.atoms[0][1].sigma2 > 0.0);
  }
}

TEST_CASE("stick update drops dead atoms and draws the Dirichlet marginal") {
  Hyperparams hp = make_hp(1);
  hp.dp_alpha = 1.0;
  RngStream root(41);

  std::vector<double> draws;
  const int reps = 3000;
  for (int t = 0; t < reps; ++t) {
    ChainState st = make_state(
        {0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.5), make_atom(0.5, 1.0, 0.3)}},
        10);
    update_beta(st, hp, root.substream(t));
    // Counts are (10, 0): the dead atom is garbage-collected.
    REQUIRE(st.atoms[0].size() == 1);
    for (int i = 0; i < 10; ++i) {
      CHECK(st.z[i] == 1);
      CHECK(st.s[i] == 0);
    }
    const double b = st.atoms[0][0].beta;
    CHECK(b > 0.0);
    CHECK(b <= 1.0 + 1e-12);
    draws.push_back(b);
  }
  // Single atom with count 10, alpha 1: beta ~ Beta(10, 1), CDF x^10.
  const double ks = testutil::ks_distance(
      draws, [](double x) { return std::pow(std::min(std::max(x, 0.0), 1.0),
                                            10.0); });
  CHECK(ks < 0.035);
}

TEST_CASE("stick update remaps surviving atom labels") {
  Hyperparams hp = make_hp(1);
  ChainState st = make_state(
      {0.0}, {2.0},
      {{make_atom(-0.5, 1.0, 0.4), make_atom(0.0, 1.0, 0.3),
        make_atom(0.5, 1.0, 0.2)}},
      6);
  // Occupy atoms 0 and 2 only; atom 1 dies and indices shift down.
  for (int i = 0; i < 6; ++i) st.s[i] = (i < 3) ? 0 : 2;
  update_beta(st, hp, RngStream(51));
  REQUIRE(st.atoms[0].size() == 2);
  for (int i = 0; i < 6; ++i) {
    CHECK(st.s[i] == (i < 3 ? 0 : 1));
  }
  CHECK(st.atoms[0][0].u(0) == doctest::Approx(-0.5));
  CHECK(st.atoms[0][1].u(0) == doctest::Approx(0.5));
  double bsum = 0.0;
  for (const Atom& a : st.atoms[0]) bsum += a.beta;
  CHECK(bsum <= 1.0 + 1e-12);
}

TEST_CASE("slice auxiliary distributions") {
  Hyperparams hp = make_hp(1);
  RngStream root(61);

  // Single occupied atom, beta = 0.8, one member: rho* = 0.8 U(0,1).
  {
    ChainState st = make_state({0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.8)}}, 1);
    std::vector<double> draws;
    for (int t = 0; t < 4000; ++t) {
      update_slice_aux(st, hp, make_data({0.1}), root.substream(t));
      CHECK(st.rho_star == st.rho_star_kj[0][0]);
      CHECK(st.i_star_kj[0][0] == 0);
      CHECK(st.rho_star <= 0.8);
      draws.push_back(st.rho_star);
    }
    const double ks = testutil::ks_distance(draws, [](double x) {
      return std::min(std::max(x / 0.8, 0.0), 1.0);
    });
    CHECK(ks < 0.035);
  }

  // Five members: the minimum of five uniforms, CDF 1 - (1 - x/b)^5.
  {
    ChainState st = make_state({0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.7)}}, 5);
    const Dataset d5 = make_data({0.1, -0.2, 0.3, 0.0, 0.2});
    std::vector<double> draws;
    for (int t = 0; t < 4000; ++t) {
      update_slice_aux(st, hp, d5, root.substream(100000 + t));
      CHECK(st.i_star_kj[0][0] >= 0);
      CHECK(st.i_star_kj[0][0] < 5);
      draws.push_back(st.rho_star);
    }
    const double ks = testutil::ks_distance(draws, [](double x) {
      const double z = std::min(std::max(x / 0.7, 0.0), 1.0);
      return 1.0 - std::pow(1.0 - z, 5.0);
    });
    CHECK(ks < 0.035);
  }

  // Two occupied atoms: the global threshold is their minimum; unoccupied
  // atoms are ignored.
  {
    ChainState st = make_state(
        {0.0}, {2.0},
        {{make_atom(-0.5, 1.0, 0.5), make_atom(0.5, 1.0, 0.4)}}, 4);
    st.s = {0, 0, 1, 1};
    const Dataset d4 = make_data({-0.4, -0.6, 0.4, 0.6});
    for (int t = 0; t < 500; ++t) {
      update_slice_aux(st, hp, d4, root.substream(200000 + t));
      CHECK(st.rho_star ==
            std::min(st.rho_star_kj[0][0], st.rho_star_kj[0][1]));
      CHECK(st.rho_star <= std::min(0.5, 0.4));
      CHECK(st.rho_star > 0.0);
    }
  }

  // Nothing occupied: the threshold relaxes fully.
  {
    ChainState st = make_state({0.0}, {2.0}, {{make_atom(0.0, 1.0, 0.8)}}, 0);
    Dataset empty;
    empty.x.resize(0, 1);
    empty.columns = {"x1"};
    update_slice_aux(st, hp, empty, root.substream(300000));
    CHECK(st.rho_star == 1.0);
  }
}

TEST_CASE("region update: conjugate center draw") {
  // mu0 = 0, eta = 1, sigma0 = 1, atom means {1, 1}: the center conditional
  // is N(2/3, 1/3) truncated to a wide feasible interval.
  Hyperparams hp;
  hp.K = 1;
  hp.eta = 1.0;
  hp.sigma0 = 1.0;
  hp.finalize(1);
  SweepPlan plan;
  RngStream root(71);

  double csum = 0.0;
  const int reps = 5000;
  for (int t = 0; t < reps; ++t) {
    ChainState st = make_state(
        {0.0}, {5.0},
        {{make_atom(1.0, 1.0, 0.5), make_atom(1.0, 1.0, 0.4)}}, 2);
    update_regions(st, hp, plan, root.substream(t));
    CHECK(st.xi > 0.0);
    CHECK(st.xi <= 1.0);
    CHECK(std::fabs(st.atoms[0][0].u(0) - st.c[0](0)) <= st.r[0] + 1e-12);
    CHECK(std::fabs(st.atoms[0][1].u(0) - st.c[0](0)) <= st.r[0] + 1e-12);
    csum += st.c[0](0);
  }
  CHECK(csum / reps == doctest::Approx(2.0 / 3.0).epsilon(0.035));
}

TEST_CASE("region update keeps regions disjoint and tracks MH statistics") {
  Hyperparams hp = make_hp(2);
  SweepPlan plan;
  ChainState st = make_state(
      {-4.0, 4.0}, {1.0, 1.0},
      {{make_atom(-4.0, 1.0, 0.9)}, {make_atom(4.0, 1.0, 0.9)}}, 2);
  st.z = {1, 2};
  RngStream root(81);
  long long attempts = 0;
  for (int t = 0; t < 2000; ++t) {
    RegionUpdateStats stats = update_regions(st, hp, plan, root.substream(t));
    attempts += stats.mh_attempts;
    CHECK(stats.mh_accepts <= stats.mh_attempts);
    CHECK(min_region_gap(st.c, st.r) > 0.0);
    const double zeta = repulsion_zeta(st.c, st.r, hp);
    CHECK(st.xi > 0.0);
    CHECK(st.xi <= zeta);
  }
  CHECK(attempts == 2000LL * 2);  // one radius proposal per component
}

TEST_CASE("fixed regions are never moved") {
  Hyperparams hp;
  hp.K = 2;
  hp.regions_fixed = true;
  hp.fixed_centers = {vec1(-3.0), vec1(3.0)};
  hp.fixed_radii = {1.0, 1.0};
  hp.finalize(1);
  SweepPlan plan;
  ChainState st = make_state(
      {-3.0, 3.0}, {1.0, 1.0},
      {{make_atom(-3.0, 1.0, 0.9)}, {make_atom(3.0, 1.0, 0.9)}}, 2);
  RegionUpdateStats stats = update_regions(st, hp, plan, RngStream(5));
  CHECK(stats.mh_attempts == 0);
  CHECK(st.c[0](0) == -3.0);
  CHECK(st.c[1](0) == 3.0);
  CHECK(st.r[0] == 1.0);
  CHECK(st.r[1] == 1.0);
}

TEST_CASE("init_state produces a valid labeled state") {
  Hyperparams hp = make_hp(2);
  std::vector<int> truth;
  const Dataset data = two_component_data(400, 3.0, 0.6, 17, &truth);
  ChainState st = init_state(data, hp, RngStream(91));
  check_state_invariants(st, hp);
  CHECK((int)st.z.size() == data.n());
  // Nearest-center initialization recovers the obvious split.
  int agree = 0;
  const bool flip = st.c[0](0) > st.c[1](0);
  for (int i = 0; i < data.n(); ++i) {
    const int want = flip ? 2 - truth[i] : truth[i] + 1;
    if (st.z[i] == want) ++agree;
  }
  CHECK(agree >= (int)(0.95 * data.n()));
}

TEST_CASE("sweeps preserve chain invariants") {
  Hyperparams hp = make_hp(2);
  const Dataset data = two_component_data(1500, 3.0, 0.7, 23);
  SweepPlan plan;
  RngStream root(101);
  ChainState st = init_state(data, hp, root.substream(0));
  for (long long t = 0; t < 40; ++t) {
    const double ll = sweep(st, hp, data, plan, root, t);
    CHECK(std::isfinite(ll));
    check_state_invariants(st, hp);
  }
}

TEST_CASE("sweep results are identical at any thread count") {
  Hyperparams hp = make_hp(2);
  // More than one map block, so the parallel path genuinely partitions work.
  const Dataset data = two_component_data(6000, 3.0, 0.7, 29);

  SweepPlan serial;
  serial.parallel = false;
  SweepPlan threaded;
  threaded.parallel = true;
  threaded.thread_count = 8;

  RngStream root_a(111);
  ChainState a = init_state(data, hp, root_a.substream(0));
  RngStream root_b(111);
  ChainState b = init_state(data, hp, root_b.substream(0));
  REQUIRE(states_identical(a, b));

  for (long long t = 0; t < 25; ++t) {
    const double la = sweep(a, hp, data, serial, root_a, t);
    const double lb = sweep(b, hp, data, threaded, root_b, t);
    CHECK(la == lb);
    REQUIRE(states_identical(a, b));
  }
}

TEST_CASE("empty-data sweeps reproduce the repulsive prior") {
  Hyperparams hp = make_hp(2);
  Dataset empty;
  empty.x.resize(0, 1);
  empty.columns = {"x1"};
  SweepPlan plan;
  RngStream root(131);
  ChainState st = init_state(empty, hp, root.substream(0));

  std::vector<double> chain_c1, chain_r1;
  const int sweeps = 10000;
  for (long long t = 0; t < sweeps; ++t) {
    sweep(st, hp, empty, plan, root, t);
    if (t >= 500) {
      chain_c1.push_back(st.c[0](0));
      chain_r1.push_back(st.r[0]);
    }
  }

  // Oracle: rejection sampling of the joint prior (accept w.p. the
  // repulsion factor), then the first-component marginals.
  RngStream og(137);
  std::vector<double> oracle_c1, oracle_r1;
  while ((int)oracle_c1.size() < 20000) {
    const double c1 = sample_normal(hp.mu0(0), hp.eta, og);
    const double c2 = sample_normal(hp.mu0(0), hp.eta, og);
    const double r1 = sample_gamma(hp.gamma_shape, hp.gamma_rate, og);
    const double r2 = sample_gamma(hp.gamma_shape, hp.gamma_rate, og);
    const double gap = std::fabs(c1 - c2) - r1 - r2;
    if (!(gap > 0.0)) continue;
    if (og.uniform() > std::exp(-hp.tau / std::pow(gap, (double)hp.nu))) {
      continue;
    }
    oracle_c1.push_back(c1);
    oracle_r1.push_back(r1);
  }

  CHECK(testutil::ks_distance2(chain_c1, oracle_c1) < 0.05);
  CHECK(testutil::ks_distance2(chain_r1, oracle_r1) < 0.05);
}

TEST_CASE("run: snapshot schedule and reproducibility") {
  RngStream g(7);
  std::vector<double> xs(40);
  for (double& v : xs) v = sample_normal(0.0, 1.0, g);
  const Dataset data = make_data(xs);
  Hyperparams hp;
  hp.K = 1;
  SweepPlan plan;

  ChainOutput out = run(data, hp, plan, 10, 3, 2, 99);
  CHECK(out.snapshots.size() == 4);  // ceil((10 - 3) / 2)
  CHECK(out.loglik.size() == 10);
  CHECK(out.seconds >= 0.0);
  CHECK(out.mh_step_final > 0.0);
  CHECK(out.hp.dirichlet_conc == doctest::Approx(1.0));

  ChainOutput rep = run(data, hp, plan, 10, 3, 2, 99);
  CHECK(rep.loglik == out.loglik);
  REQUIRE(rep.snapshots.size() == out.snapshots.size());
  for (size_t i = 0; i < rep.snapshots.size(); ++i) {
    CHECK(states_identical(rep.snapshots[i], out.snapshots[i]));
  }

  ChainOutput other = run(data, hp, plan, 10, 3, 2, 100);
  CHECK(other.loglik != out.loglik);

  CHECK_THROWS_AS(run(data, hp, plan, 5, 5, 1, 1), InvalidArgumentError);
  CHECK_THROWS_AS(run(data, hp, plan, 5, -1, 1, 1), InvalidArgumentError);
  CHECK_THROWS_AS(run(data, hp, plan, 5, 0, 0, 1), InvalidArgumentError);
  Hyperparams hp9;
  hp9.K = 50;
  CHECK_THROWS_AS(run(data, hp9, plan, 5, 0, 1, 1), InvalidArgumentError);
}

TEST_CASE("run recovers a standard normal density at the origin") {
  RngStream g(13);
  std::vector<double> xs(1000);
  for (double& v : xs) v = sample_normal(0.0, 1.0, g);
  const Dataset data = make_data(xs);
  Hyperparams hp;
  hp.K = 1;
  SweepPlan plan;
  ChainOutput out = run(data, hp, plan, 2000, 500, 5, 4242);
  REQUIRE(out.snapshots.size() == 300);
  const double x0 = 0.0;
  double acc = 0.0;
  for (const ChainState& snap : out.snapshots) {
    acc += std::exp(mixture_logpdf(snap, out.hp, &x0, 1));
  }
  CHECK(acc / out.snapshots.size() ==
        doctest::Approx(0.39894).epsilon(0.05 / 0.39894));
}

TEST_CASE("run separates well-separated components") {
  std::vector<int> truth;
  const Dataset data = two_component_data(600, 4.0, 0.5, 37, &truth);
  Hyperparams hp;
  hp.K = 2;
  SweepPlan plan;
  ChainOutput out = run(data, hp, plan, 600, 200, 4, 777);
  const ChainState& last = out.snapshots.back();
  const bool flip = last.c[0](0) > last.c[1](0);
  int agree = 0;
  for (int i = 0; i < data.n(); ++i) {
    const int want = flip ? 2 - truth[i] : truth[i] + 1;
    if (last.z[i] == want) ++agree;
  }
  CHECK(agree >= (int)(0.95 * data.n()));
}

TEST_CASE("run fails loudly when the likelihood degenerates") {
  const Dataset data = make_data({0.0, 1e200});
  Hyperparams hp;
  hp.K = 1;
  SweepPlan plan;
  CHECK_THROWS_AS(run(data, hp, plan, 10, 0, 1, 3), NumericalError);
}
