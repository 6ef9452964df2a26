#include "npmix/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <memory>
#include <mutex>
#include <thread>

#include "npmix/errors.hpp"
#include "npmix/numerics.hpp"

namespace npmix {

namespace {

// Phase tags for per-sweep RNG substreams.
enum Phase : std::uint64_t {
  kPhaseExtend = 1,
  kPhaseMap = 2,
  kPhaseWeights = 3,
  kPhaseReduce = 4,
  kPhaseBeta = 5,
  kPhaseSliceAux = 6,
  kPhaseRegions = 7,
};

constexpr std::uint64_t kInitTag = 0x696e6974u;  // distinct from sweep indices
constexpr int kMapBlock = 4096;  // fixed block size keeps reductions ordered
constexpr long long kMaxAtoms = 1000000;

// ----------------------------------------------------------------------------
// Minimal fork-join pool. All bookkeeping sits under one mutex; items are
// coarse (observation blocks, clusters), so the lock is never contended for
// long. The calling thread participates in the work.
class ThreadPool {
 public:
  explicit ThreadPool(int extra_workers) {
    for (int i = 0; i < extra_workers; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void parallel_for(int n_items, const std::function<void(int)>& fn) {
    if (n_items <= 0) return;
    if (workers_.empty() || n_items == 1) {
      for (int i = 0; i < n_items; ++i) fn(i);
      return;
    }
    std::unique_lock<std::mutex> lk(mu_);
    fn_ = &fn;
    next_ = 0;
    total_ = n_items;
    pending_ = n_items;
    cv_.notify_all();
    while (next_ < total_) {
      const int i = next_++;
      lk.unlock();
      fn(i);
      lk.lock();
      if (--pending_ == 0) done_cv_.notify_all();
    }
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
    total_ = 0;
  }

 private:
  void worker_loop() {
    std::unique_lock<std::mutex> lk(mu_);
    while (!stop_) {
      if (fn_ != nullptr && next_ < total_) {
        const int i = next_++;
        const std::function<void(int)>* f = fn_;
        lk.unlock();
        (*f)(i);
        lk.lock();
        if (--pending_ == 0) done_cv_.notify_all();
      } else {
        cv_.wait(lk);
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  const std::function<void(int)>* fn_ = nullptr;
  int next_ = 0;
  int total_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

int resolve_threads(const SweepPlan& plan) {
  if (!plan.parallel) return 1;
  if (plan.thread_count > 0) return plan.thread_count;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? (int)hw : 1;
}

ThreadPool& shared_pool(int n_threads) {
  static std::mutex pool_mu;
  static std::unique_ptr<ThreadPool> pool;
  static int pool_threads = -1;
  std::lock_guard<std::mutex> lk(pool_mu);
  if (pool_threads != n_threads) {
    pool.reset();
    pool = std::make_unique<ThreadPool>(n_threads - 1);
    pool_threads = n_threads;
  }
  return *pool;
}

bool scale_axis(const Hyperparams& hp) {
  return hp.separation_axis == SeparationAxis::scale;
}

// Effective sigma interval of a scale-axis region.
void sigma_interval(const ChainState& state, int k0, double* lo, double* hi) {
  *lo = std::max(state.c[k0](0) - state.r[k0], 0.0);
  *hi = state.c[k0](0) + state.r[k0];
}

double scale_ig_mass(const Hyperparams& hp, double lo, double hi) {
  if (!(hi > 0.0)) return 0.0;
  const double f_hi = gammq(hp.theta1, hp.theta2 / (hi * hi));
  const double f_lo = (lo <= 0.0) ? 0.0 : gammq(hp.theta1, hp.theta2 / (lo * lo));
  return f_hi - f_lo;
}

// Fresh (u, sigma) draw from component k0's base measure under the current
// regions. beta is left for the caller.
Atom draw_base_atom(const ChainState& state, const Hyperparams& hp, int k0,
                    int m, RngStream& rng) {
  Atom a;
  if (m == 1) {
    a.u = Eigen::VectorXd(1);
    if (!scale_axis(hp)) {
      const double ck = state.c[k0](0);
      const double rk = state.r[k0];
      a.u(0) = sample_truncated_normal(ck, hp.sigma0, ck - rk, ck + rk, rng);
      a.sigma2 = sample_inverse_gamma(hp.theta1, hp.theta2, rng);
    } else {
      double lo, hi;
      sigma_interval(state, k0, &lo, &hi);
      a.u(0) = sample_normal(state.loc_mean[k0], hp.sigma0, rng);
      try {
        a.sigma2 = sample_truncated_inverse_gamma(hp.theta1, hp.theta2,
                                                  lo * lo, hi * hi, rng);
      } catch (const NumericalError&) {
        // Negligible inverse-gamma mass on the interval: fall back to a
        // uniform sigma inside it so the chain can keep moving.
        const double s = rng.uniform(std::max(lo, 1e-12), hi);
        a.sigma2 = s * s;
      }
    }
  } else {
    a.u = sample_truncated_mvn_hypercube(
        state.c[k0], SpdMatrix(hp.sigma0 * hp.sigma0 *
                               Eigen::MatrixXd::Identity(m, m)),
        state.c[k0], state.r[k0], rng);
    a.sigma = sample_inverse_wishart(hp.iw_df, SpdMatrix(hp.iw_scale), rng).mat();
  }
  a.refresh_cache();
  return a;
}

}  // namespace

// --- conjugate helpers --------------------------------------------------------

NormalPosterior conjugate_normal_posterior(double prior_mean, double prior_sd,
                                           double obs_var, double sum_obs,
                                           long long n) {
  if (!(prior_sd > 0.0) || !(obs_var > 0.0) || n < 0) {
    throw InvalidArgumentError("conjugate_normal_posterior: bad parameters");
  }
  const double pv = prior_sd * prior_sd;
  NormalPosterior out;
  out.mean = (prior_mean * obs_var + sum_obs * pv) / (obs_var + (double)n * pv);
  out.sd = 1.0 / std::sqrt(1.0 / pv + (double)n / obs_var);
  return out;
}

InverseGammaPosterior inverse_gamma_posterior(double theta1, double theta2,
                                              long long n, double sum_sq_dev) {
  if (!(theta1 > 0.0) || !(theta2 > 0.0) || n < 0 || sum_sq_dev < 0.0) {
    throw InvalidArgumentError("inverse_gamma_posterior: bad parameters");
  }
  return {theta1 + 0.5 * (double)n, theta2 + 0.5 * sum_sq_dev};
}

std::vector<double> dirichlet_posterior(double conc,
                                        const std::vector<long long>& counts) {
  if (!(conc > 0.0)) {
    throw InvalidArgumentError("dirichlet_posterior: conc must be > 0");
  }
  std::vector<double> alpha(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) {
    alpha[i] = conc + (double)counts[i];
  }
  return alpha;
}

double repulsion_gap_floor(double xi, const Hyperparams& hp) {
  if (xi <= 0.0) return 0.0;
  if (xi >= 1.0) return INFINITY;
  return std::pow(hp.tau / (-std::log(xi)), 1.0 / (double)hp.nu);
}

// --- extend_atoms ----------------------------------------------------------------

void extend_atoms(ChainState& state, const Hyperparams& hp, int k,
                  RngStream rng) {
  if (k < 1 || k > state.K()) {
    throw InvalidArgumentError("extend_atoms: component index out of range");
  }
  if (!(state.rho_star > 0.0) || state.rho_star > 1.0) {
    throw InvalidArgumentError("extend_atoms: rho_star must lie in (0, 1]");
  }
  const int k0 = k - 1;
  const int m = (int)state.c[k0].size();
  double rem = 1.0;
  for (const Atom& a : state.atoms[k0]) rem -= a.beta;
  while (rem >= state.rho_star) {
    if ((long long)state.atoms[k0].size() >= kMaxAtoms) {
      throw NumericalError(
          "extend_atoms: atom count exceeded 10^6; slice threshold degenerate");
    }
    const double nu = sample_beta(1.0, hp.dp_alpha, rng);
    Atom a = draw_base_atom(state, hp, k0, m, rng);
    a.beta = nu * rem;
    rem -= a.beta;
    state.atoms[k0].push_back(std::move(a));
    state.rho_star_kj[k0].push_back(INFINITY);
    state.i_star_kj[k0].push_back(-1);
  }
}

// --- map step --------------------------------------------------------------------

double draw_slice_and_labels(ChainState& state, const Hyperparams& hp,
                             const Dataset& data, const SweepPlan& plan,
                             RngStream rng) {
  const int n = data.n();
  if (n == 0) return 0.0;
  const int m = data.m();
  const int K = state.K();

  // Flatten atoms for the hot loop.
  std::vector<int> offset(K + 1, 0);
  for (int k0 = 0; k0 < K; ++k0) {
    offset[k0 + 1] = offset[k0] + (int)state.atoms[k0].size();
  }
  const int total_atoms = offset[K];
  std::vector<const Atom*> flat(total_atoms);
  std::vector<double> beta(total_atoms);
  for (int k0 = 0; k0 < K; ++k0) {
    for (size_t j = 0; j < state.atoms[k0].size(); ++j) {
      flat[offset[k0] + j] = &state.atoms[k0][j];
      beta[offset[k0] + j] = state.atoms[k0][j].beta;
    }
  }

  const bool bg = hp.background.has_value();
  const double log_bg_density =
      bg ? -std::log(hp.background->volume()) : -INFINITY;
  const double w_bg = state.w_bg;

  std::vector<int> new_z(n), new_s(n);
  const int n_blocks = (n + kMapBlock - 1) / kMapBlock;
  std::vector<double> block_loglik(n_blocks, 0.0);

  auto process_block = [&](int b) {
    const int i_lo = b * kMapBlock;
    const int i_hi = std::min(n, i_lo + kMapBlock);
    std::vector<double> lk(total_atoms);
    std::vector<double> comp_score(K);
    double partial = 0.0;
    for (int i = i_lo; i < i_hi; ++i) {
      RngStream r = rng.substream((std::uint64_t)i);
      const double* x = data.row(i);

      // Reconstruct the slice variable from the stored per-atom minimum.
      double rho;
      if (state.z[i] == 0) {
        rho = ((long long)i == state.i_star_bg)
                  ? state.rho_star_bg
                  : r.uniform(state.rho_star_bg, 1.0);
      } else {
        const int k0 = state.z[i] - 1;
        const int j = state.s[i];
        const double lo = state.rho_star_kj[k0][j];
        const double b_kj = state.atoms[k0][j].beta;
        rho = ((long long)i == state.i_star_kj[k0][j]) ? lo
                                                       : r.uniform(lo, b_kj);
      }

      // Kernel logs, one pass; track the max for a stable shift.
      double gmax = -INFINITY;
      double bg_term_log = -INFINITY;
      if (bg && hp.background->contains(x, m) && w_bg > 0.0) {
        bg_term_log = std::log(w_bg) + log_bg_density;
        gmax = bg_term_log;
      }
      for (int a = 0; a < total_atoms; ++a) {
        lk[a] = flat[a]->log_kernel(x, m);
        if (lk[a] > gmax) gmax = lk[a];
      }
      if (gmax == -INFINITY) gmax = 0.0;

      double z_total = 0.0;
      double full_total = 0.0;
      bool any_eligible = false;
      for (int k0 = 0; k0 < K; ++k0) {
        double score = 0.0;
        double weighted = 0.0;
        for (int a = offset[k0]; a < offset[k0 + 1]; ++a) {
          const double g = std::exp(lk[a] - gmax);
          weighted += beta[a] * g;
          if (beta[a] > rho) {
            score += g;
            any_eligible = true;
          }
        }
        comp_score[k0] = state.w(k0) * score;
        z_total += comp_score[k0];
        full_total += state.w(k0) * weighted;
      }
      double bg_score = 0.0;
      if (bg_term_log > -INFINITY) {
        bg_score = std::exp(bg_term_log - gmax);  // slice always passes (B=1)
        z_total += bg_score;
        full_total += bg_score;
        any_eligible = true;
      }

      if (!any_eligible) {
        char msg[96];
        std::snprintf(msg, sizeof(msg),
                      "slice reconstruction: no eligible atom for "
                      "observation %d",
                      i);
        throw NumericalError(msg);
      }

      partial += gmax + std::log(full_total);

      if (z_total <= 0.0 || !std::isfinite(z_total)) {
        // Only reachable through weight underflow; keep the current labels.
        new_z[i] = state.z[i];
        new_s[i] = state.s[i];
        continue;
      }

      // Component draw.
      const double u_z = r.uniform() * z_total;
      double cum = 0.0;
      int pick_k = -1;  // -1 encodes background
      for (int k0 = 0; k0 < K; ++k0) {
        cum += comp_score[k0];
        if (u_z <= cum) {
          pick_k = k0;
          break;
        }
      }
      if (pick_k == -1 && !(bg_score > 0.0)) {
        pick_k = K - 1;  // guard against fp round-off at the top end
        while (pick_k > 0 && comp_score[pick_k] <= 0.0) --pick_k;
      }
      if (pick_k == -1) {
        new_z[i] = 0;
        new_s[i] = -1;
        continue;
      }

      // Atom draw within the component.
      double s_total = 0.0;
      for (int a = offset[pick_k]; a < offset[pick_k + 1]; ++a) {
        if (beta[a] > rho) s_total += std::exp(lk[a] - gmax);
      }
      const double u_s = r.uniform() * s_total;
      cum = 0.0;
      int pick_j = -1;
      for (int a = offset[pick_k]; a < offset[pick_k + 1]; ++a) {
        if (beta[a] <= rho) continue;
        cum += std::exp(lk[a] - gmax);
        pick_j = a - offset[pick_k];
        if (u_s <= cum) break;
      }
      if (pick_j < 0) {
        // The picked component had no eligible atom (weight underflow path).
        new_z[i] = state.z[i];
        new_s[i] = state.s[i];
        continue;
      }
      new_z[i] = pick_k + 1;
      new_s[i] = pick_j;
    }
    block_loglik[b] = partial;
  };

  const int threads = resolve_threads(plan);
  if (threads > 1) {
    shared_pool(threads).parallel_for(n_blocks, process_block);
  } else {
    for (int b = 0; b < n_blocks; ++b) process_block(b);
  }

  state.z = std::move(new_z);
  state.s = std::move(new_s);

  double loglik = 0.0;
  for (int b = 0; b < n_blocks; ++b) loglik += block_loglik[b];
  return loglik;
}

// --- update_weights -----------------------------------------------------------------

void update_weights(ChainState& state, const Hyperparams& hp, RngStream rng) {
  const int K = state.K();
  const bool bg = hp.background.has_value();
  std::vector<long long> counts(K + (bg ? 1 : 0), 0);
  for (int zi : state.z) {
    if (zi == 0) {
      if (bg) ++counts[K];
    } else {
      ++counts[zi - 1];
    }
  }
  const std::vector<double> alpha = dirichlet_posterior(hp.dirichlet_conc, counts);
  const std::vector<double> draw = sample_dirichlet(alpha, rng);
  state.w.resize(K);
  for (int k0 = 0; k0 < K; ++k0) state.w(k0) = draw[k0];
  state.w_bg = bg ? draw[K] : 0.0;
}

// --- update_atoms --------------------------------------------------------------------

namespace {

struct ClusterStats {
  long long count = 0;
  double sum = 0.0;     // univariate
  double sumsq = 0.0;   // univariate
  Eigen::VectorXd vsum;     // multivariate
  Eigen::MatrixXd scatter;  // multivariate sum of x x^T
};

}  // namespace

void update_atoms(ChainState& state, const Hyperparams& hp,
                  const Dataset& data, const SweepPlan& plan, RngStream rng) {
  const int K = state.K();
  const int m = data.m();

  std::vector<int> offset(K + 1, 0);
  for (int k0 = 0; k0 < K; ++k0) {
    offset[k0 + 1] = offset[k0] + (int)state.atoms[k0].size();
  }
  std::vector<ClusterStats> stats(offset[K]);
  if (m > 1) {
    for (auto& st : stats) {
      st.vsum = Eigen::VectorXd::Zero(m);
      st.scatter = Eigen::MatrixXd::Zero(m, m);
    }
  }
  for (int i = 0; i < data.n(); ++i) {
    if (state.z[i] == 0) continue;
    ClusterStats& st = stats[offset[state.z[i] - 1] + state.s[i]];
    ++st.count;
    const double* x = data.row(i);
    if (m == 1) {
      st.sum += x[0];
      st.sumsq += x[0] * x[0];
    } else {
      for (int d = 0; d < m; ++d) st.vsum(d) += x[d];
      for (int d = 0; d < m; ++d) {
        for (int e = 0; e < m; ++e) st.scatter(d, e) += x[d] * x[e];
      }
    }
  }

  auto update_cluster = [&](int flat_idx) {
    int k0 = 0;
    while (offset[k0 + 1] <= flat_idx) ++k0;
    const int j = flat_idx - offset[k0];
    Atom& a = state.atoms[k0][j];
    const ClusterStats& st = stats[flat_idx];
    RngStream r = rng.substream((std::uint64_t)k0).substream((std::uint64_t)j);

    if (st.count == 0) {
      const double keep_beta = a.beta;
      a = draw_base_atom(state, hp, k0, m, r);
      a.beta = keep_beta;
      return;
    }

    if (m == 1) {
      if (!scale_axis(hp)) {
        const double ck = state.c[k0](0);
        const double rk = state.r[k0];
        const NormalPosterior post = conjugate_normal_posterior(
            ck, hp.sigma0, a.sigma2, st.sum, st.count);
        const double u_new = sample_truncated_normal(post.mean, post.sd,
                                                     ck - rk, ck + rk, r);
        const double ssd = std::max(
            0.0, st.sumsq - 2.0 * u_new * st.sum +
                     (double)st.count * u_new * u_new);
        const InverseGammaPosterior ig =
            inverse_gamma_posterior(hp.theta1, hp.theta2, st.count, ssd);
        a.u(0) = u_new;
        a.sigma2 = sample_inverse_gamma(ig.shape, ig.scale, r);
      } else {
        const NormalPosterior post = conjugate_normal_posterior(
            state.loc_mean[k0], hp.sigma0, a.sigma2, st.sum, st.count);
        const double u_new = sample_normal(post.mean, post.sd, r);
        const double ssd = std::max(
            0.0, st.sumsq - 2.0 * u_new * st.sum +
                     (double)st.count * u_new * u_new);
        const InverseGammaPosterior ig =
            inverse_gamma_posterior(hp.theta1, hp.theta2, st.count, ssd);
        double lo, hi;
        sigma_interval(state, k0, &lo, &hi);
        a.u(0) = u_new;
        try {
          a.sigma2 = sample_truncated_inverse_gamma(ig.shape, ig.scale,
                                                    lo * lo, hi * hi, r);
        } catch (const NumericalError&) {
          // Posterior mass on the sigma interval underflowed; keep the old
          // value (still inside the interval) rather than aborting the sweep.
        }
      }
      a.refresh_cache();
      return;
    }

    // Multivariate: truncated-MVN mean given Sigma, then inverse-Wishart.
    Eigen::LLT<Eigen::MatrixXd> llt(a.sigma);
    const Eigen::MatrixXd sig_inv =
        llt.solve(Eigen::MatrixXd::Identity(m, m));
    const double prec0 = 1.0 / (hp.sigma0 * hp.sigma0);
    Eigen::MatrixXd post_prec =
        prec0 * Eigen::MatrixXd::Identity(m, m) + (double)st.count * sig_inv;
    Eigen::LLT<Eigen::MatrixXd> llt_prec(post_prec);
    const Eigen::MatrixXd post_cov =
        llt_prec.solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::VectorXd post_mean =
        llt_prec.solve(prec0 * state.c[k0] + sig_inv * st.vsum);
    const Eigen::VectorXd u_new = sample_truncated_mvn_hypercube(
        post_mean, SpdMatrix(0.5 * (post_cov + post_cov.transpose())),
        state.c[k0], state.r[k0], r);
    Eigen::MatrixXd dev_scatter =
        st.scatter - u_new * st.vsum.transpose() -
        st.vsum * u_new.transpose() +
        (double)st.count * u_new * u_new.transpose();
    dev_scatter = 0.5 * (dev_scatter + dev_scatter.transpose());
    // Guard against round-off making the scatter indefinite.
    dev_scatter += 1e-12 * Eigen::MatrixXd::Identity(m, m);
    const SpdMatrix iw_post(hp.iw_scale + dev_scatter);
    a.u = u_new;
    a.sigma = sample_inverse_wishart(hp.iw_df + (double)st.count, iw_post, r).mat();
    a.refresh_cache();
  };

  const int threads = resolve_threads(plan);
  if (threads > 1 && offset[K] > 1) {
    shared_pool(threads).parallel_for(offset[K], update_cluster);
  } else {
    for (int idx = 0; idx < offset[K]; ++idx) update_cluster(idx);
  }
}

// --- update_beta + garbage collection ---------------------------------------------

void update_beta(ChainState& state, const Hyperparams& hp, RngStream rng) {
  const int K = state.K();
  std::vector<std::vector<long long>> counts(K);
  for (int k0 = 0; k0 < K; ++k0) {
    counts[k0].assign(state.atoms[k0].size(), 0);
  }
  for (size_t i = 0; i < state.z.size(); ++i) {
    if (state.z[i] > 0) ++counts[state.z[i] - 1][state.s[i]];
  }

  for (int k0 = 0; k0 < K; ++k0) {
    RngStream r = rng.substream((std::uint64_t)k0);
    const size_t n_atoms = state.atoms[k0].size();
    std::vector<double> g(n_atoms, 0.0);
    double total = 0.0;
    for (size_t j = 0; j < n_atoms; ++j) {
      if (counts[k0][j] > 0) {
        // Gamma(0) carries no mass: unoccupied atoms draw nothing.
        g[j] = sample_gamma((double)counts[k0][j], 1.0, r);
        total += g[j];
      }
    }
    const double g_rem = sample_gamma(hp.dp_alpha, 1.0, r);
    total += g_rem;
    if (!(total > 0.0) || !std::isfinite(total)) {
      // Gamma underflow: fall back to empirical occupancy fractions.
      long long occ = 0;
      for (long long c : counts[k0]) occ += c;
      for (size_t j = 0; j < n_atoms; ++j) {
        state.atoms[k0][j].beta =
            (occ > 0) ? 0.5 * (double)counts[k0][j] / (double)occ : 0.0;
      }
    } else {
      for (size_t j = 0; j < n_atoms; ++j) {
        state.atoms[k0][j].beta = g[j] / total;
      }
    }

    // Garbage-collect dead atoms and remap the observation atom labels.
    std::vector<int> remap(n_atoms, -1);
    int kept = 0;
    for (size_t j = 0; j < n_atoms; ++j) {
      if (counts[k0][j] > 0) {
        remap[j] = kept;
        if ((int)j != kept) {
          state.atoms[k0][kept] = std::move(state.atoms[k0][j]);
        }
        ++kept;
      }
    }
    state.atoms[k0].resize(kept);
    state.rho_star_kj[k0].assign(kept, INFINITY);
    state.i_star_kj[k0].assign(kept, -1);
    for (size_t i = 0; i < state.z.size(); ++i) {
      if (state.z[i] == k0 + 1) {
        const int ns = remap[state.s[i]];
        if (ns < 0) {
          throw NumericalError(
              "update_beta: occupied atom was garbage-collected");
        }
        state.s[i] = ns;
      }
    }
  }
}

// --- update_slice_aux ---------------------------------------------------------------

void update_slice_aux(ChainState& state, const Hyperparams& hp,
                      const Dataset& data, RngStream rng) {
  (void)data;
  const int K = state.K();
  std::vector<int> offset(K + 1, 0);
  for (int k0 = 0; k0 < K; ++k0) {
    offset[k0 + 1] = offset[k0] + (int)state.atoms[k0].size();
  }
  // Member lists per cluster (and for the background pseudo-atom).
  std::vector<std::vector<long long>> members(offset[K]);
  std::vector<long long> bg_members;
  for (size_t i = 0; i < state.z.size(); ++i) {
    if (state.z[i] == 0) {
      bg_members.push_back((long long)i);
    } else {
      members[offset[state.z[i] - 1] + state.s[i]].push_back((long long)i);
    }
  }

  double global_min = INFINITY;
  for (int k0 = 0; k0 < K; ++k0) {
    for (size_t j = 0; j < state.atoms[k0].size(); ++j) {
      const auto& mem = members[offset[k0] + j];
      RngStream r =
          rng.substream((std::uint64_t)k0).substream((std::uint64_t)j);
      if (mem.empty()) {
        state.rho_star_kj[k0][j] = INFINITY;
        state.i_star_kj[k0][j] = -1;
        continue;
      }
      const double b = sample_beta(1.0, (double)mem.size(), r);
      const double rs = state.atoms[k0][j].beta * b;
      state.rho_star_kj[k0][j] = rs;
      const size_t pick = std::min(
          mem.size() - 1, (size_t)(r.uniform() * (double)mem.size()));
      state.i_star_kj[k0][j] = mem[pick];
      global_min = std::min(global_min, rs);
    }
  }

  if (hp.background.has_value() && !bg_members.empty()) {
    RngStream r = rng.substream(0xb6u);
    const double b = sample_beta(1.0, (double)bg_members.size(), r);
    state.rho_star_bg = b;  // pseudo-atom stick weight is 1
    const size_t pick = std::min(
        bg_members.size() - 1,
        (size_t)(r.uniform() * (double)bg_members.size()));
    state.i_star_bg = bg_members[pick];
    global_min = std::min(global_min, b);
  } else {
    state.rho_star_bg = 1.0;
    state.i_star_bg = -1;
  }

  state.rho_star = std::isfinite(global_min) ? global_min : 1.0;
}

// --- update_regions -----------------------------------------------------------------

namespace {

struct Piece {
  double lo, hi, mass;
};

// Subtracts the closed intervals `holes` from [lo, hi]; returns the leftover
// pieces in ascending order.
std::vector<Piece> subtract_intervals(double lo, double hi,
                                      std::vector<std::pair<double, double>> holes) {
  std::sort(holes.begin(), holes.end());
  std::vector<Piece> out;
  double cur = lo;
  for (const auto& h : holes) {
    if (h.second < cur) continue;
    if (h.first > hi) break;
    if (h.first > cur) out.push_back({cur, std::min(h.first, hi), 0.0});
    cur = std::max(cur, h.second);
    if (cur >= hi) break;
  }
  if (cur < hi) out.push_back({cur, hi, 0.0});
  return out;
}

// Draws from N(mean, sd^2) restricted to the union of pieces, by mass.
// Returns false when the total mass underflows.
bool sample_piecewise_normal(double mean, double sd, std::vector<Piece>& pieces,
                             RngStream& rng, double* out) {
  double total = 0.0;
  for (auto& p : pieces) {
    p.mass = truncated_normal_mass(mean, sd, p.lo, p.hi);
    total += p.mass;
  }
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (const auto& p : pieces) {
    cum += p.mass;
    if (u <= cum || &p == &pieces.back()) {
      *out = truncated_normal_icdf(mean, sd, p.lo, p.hi, rng.uniform());
      return true;
    }
  }
  return false;
}

// L-infinity distance between two centers.
double linf(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

RegionUpdateStats update_regions(ChainState& state, const Hyperparams& hp,
                                 const SweepPlan& plan, RngStream rng) {
  RegionUpdateStats stats;
  if (hp.regions_fixed) return stats;
  const int K = state.K();
  const int m = (int)state.c[0].size();

  // Repulsion auxiliary.
  const double zeta = repulsion_zeta(state.c, state.r, hp);
  if (!(zeta > 0.0)) {
    throw NumericalError("update_regions: current regions overlap (zeta = 0)");
  }
  state.xi = zeta * rng.substream(0).uniform();
  const double gap_floor = repulsion_gap_floor(state.xi, hp);

  const bool scale = scale_axis(hp);

  for (int k0 = 0; k0 < K; ++k0) {
    RngStream r_i = rng.substream(1).substream((std::uint64_t)k0);
    const auto& atoms = state.atoms[k0];
    const long long nj = (long long)atoms.size();

    if (!scale) {
      // ---- location axis: conjugate center on the feasible set ----
      if (m == 1) {
        double sum_u = 0.0, min_u = INFINITY, max_u = -INFINITY;
        for (const Atom& a : atoms) {
          sum_u += a.u(0);
          min_u = std::min(min_u, a.u(0));
          max_u = std::max(max_u, a.u(0));
        }
        const NormalPosterior post = conjugate_normal_posterior(
            hp.mu0(0), hp.eta, hp.sigma0 * hp.sigma0, sum_u, nj);
        double lo = (nj > 0) ? max_u - state.r[k0] : -INFINITY;
        double hi = (nj > 0) ? min_u + state.r[k0] : INFINITY;
        // Clip infinite bounds so interval arithmetic stays finite.
        const double span = 12.0 * post.sd + 12.0 * hp.eta;
        lo = std::max(lo, post.mean - span);
        hi = std::min(hi, post.mean + span);
        std::vector<std::pair<double, double>> holes;
        for (int l = 0; l < K; ++l) {
          if (l == k0) continue;
          const double s = state.r[k0] + state.r[l] + gap_floor;
          holes.push_back({state.c[l](0) - s, state.c[l](0) + s});
        }
        if (lo < hi) {
          auto pieces = subtract_intervals(lo, hi, std::move(holes));
          double draw;
          if (!pieces.empty() &&
              sample_piecewise_normal(post.mean, post.sd, pieces, r_i, &draw)) {
            state.c[k0](0) = draw;
          }
          // Empty/underflowed feasible set: keep the current center (it is
          // feasible by construction of xi).
        }
      } else {
        // Per-coordinate conjugate draw on the containment box, then accept
        // if the L-infinity gaps clear the floor.
        Eigen::VectorXd sum_u = Eigen::VectorXd::Zero(m);
        Eigen::VectorXd min_u = Eigen::VectorXd::Constant(m, INFINITY);
        Eigen::VectorXd max_u = Eigen::VectorXd::Constant(m, -INFINITY);
        for (const Atom& a : atoms) {
          sum_u += a.u;
          min_u = min_u.cwiseMin(a.u);
          max_u = max_u.cwiseMax(a.u);
        }
        const double obs_var = hp.sigma0 * hp.sigma0;
        Eigen::VectorXd proposal(m);
        bool ok = false;
        for (int attempt = 0; attempt < 500 && !ok; ++attempt) {
          for (int d = 0; d < m; ++d) {
            const NormalPosterior post = conjugate_normal_posterior(
                hp.mu0(d), hp.eta, obs_var, sum_u(d), nj);
            double lo = (nj > 0) ? max_u(d) - state.r[k0] : -INFINITY;
            double hi = (nj > 0) ? min_u(d) + state.r[k0] : INFINITY;
            const double span = 12.0 * post.sd + 12.0 * hp.eta;
            lo = std::max(lo, post.mean - span);
            hi = std::min(hi, post.mean + span);
            if (!(lo < hi)) {
              lo = post.mean - span;
              hi = post.mean + span;
            }
            proposal(d) = sample_truncated_normal(post.mean, post.sd, lo, hi,
                                                  r_i);
          }
          ok = true;
          for (int l = 0; l < K && ok; ++l) {
            if (l == k0) continue;
            if (linf(proposal, state.c[l]) - state.r[k0] - state.r[l] <=
                gap_floor) {
              ok = false;
            }
          }
        }
        if (ok) state.c[k0] = proposal;
      }

      // ---- radius: random-walk MH on log r ----
      double max_dev = 0.0;
      for (const Atom& a : atoms) {
        max_dev = std::max(max_dev, (m == 1)
                                        ? std::fabs(a.u(0) - state.c[k0](0))
                                        : linf(a.u, state.c[k0]));
      }
      const double expo = (double)nj * (double)(m == 1 ? 1 : m);
      auto log_target = [&](double rr) -> double {
        if (!(rr > 0.0) || rr < max_dev) return -INFINITY;
        for (int l = 0; l < K; ++l) {
          if (l == k0) continue;
          const double dist = (m == 1)
                                  ? std::fabs(state.c[k0](0) - state.c[l](0))
                                  : linf(state.c[k0], state.c[l]);
          if (dist - rr - state.r[l] <= gap_floor) return -INFINITY;
        }
        const double mass = 1.0 - 2.0 * normal_cdf(-rr / hp.sigma0);
        return log_gamma_pdf(rr, hp.gamma_shape, hp.gamma_rate) -
               expo * std::log(mass);
      };
      const double r_cur = state.r[k0];
      const double r_prop =
          r_cur * std::exp(plan.mh_step * sample_normal(0.0, 1.0, r_i));
      ++stats.mh_attempts;
      const double log_acc = log_target(r_prop) + std::log(r_prop) -
                             log_target(r_cur) - std::log(r_cur);
      if (std::log(r_i.uniform()) < log_acc) {
        state.r[k0] = r_prop;
        ++stats.mh_accepts;
      }
    } else {
      // ---- scale axis: both interval parameters move by MH; the conjugate
      // location hyper-mean refreshes afterwards ----
      double min_s = INFINITY, max_s = -INFINITY, sum_u = 0.0;
      for (const Atom& a : atoms) {
        const double s = std::sqrt(a.sigma2);
        min_s = std::min(min_s, s);
        max_s = std::max(max_s, s);
        sum_u += a.u(0);
      }
      auto log_target_cr = [&](double cc, double rr) -> double {
        if (!(rr > 0.0)) return -INFINITY;
        const double lo = std::max(cc - rr, 0.0);
        const double hi = cc + rr;
        if (!(hi > 0.0)) return -INFINITY;
        if (nj > 0 && (min_s < lo || max_s > hi)) return -INFINITY;
        for (int l = 0; l < K; ++l) {
          if (l == k0) continue;
          if (std::fabs(cc - state.c[l](0)) - rr - state.r[l] <= gap_floor) {
            return -INFINITY;
          }
        }
        const double mass = scale_ig_mass(hp, lo, hi);
        if (!(mass > 0.0)) return -INFINITY;
        double acc = log_normal_pdf(cc, hp.mu0(0), hp.eta) +
                     log_gamma_pdf(rr, hp.gamma_shape, hp.gamma_rate) -
                     (double)nj * std::log(mass);
        return acc;
      };
      // Center move (plain random walk).
      {
        const double c_cur = state.c[k0](0);
        const double c_prop =
            c_cur + plan.mh_step * sample_normal(0.0, 1.0, r_i);
        const double log_acc =
            log_target_cr(c_prop, state.r[k0]) - log_target_cr(c_cur, state.r[k0]);
        if (std::log(r_i.uniform()) < log_acc) state.c[k0](0) = c_prop;
      }
      // Radius move (log-scale walk with Jacobian).
      {
        const double r_cur = state.r[k0];
        const double r_prop =
            r_cur * std::exp(plan.mh_step * sample_normal(0.0, 1.0, r_i));
        ++stats.mh_attempts;
        const double log_acc = log_target_cr(state.c[k0](0), r_prop) +
                               std::log(r_prop) -
                               log_target_cr(state.c[k0](0), r_cur) -
                               std::log(r_cur);
        if (std::log(r_i.uniform()) < log_acc) {
          state.r[k0] = r_prop;
          ++stats.mh_accepts;
        }
      }
      // Location hyper-mean: plain conjugate normal.
      const NormalPosterior post = conjugate_normal_posterior(
          hp.loc_mu0, hp.loc_eta, hp.sigma0 * hp.sigma0, sum_u, nj);
      state.loc_mean[k0] = sample_normal(post.mean, post.sd, r_i);
    }
  }
  return stats;
}

// --- sweep ---------------------------------------------------------------------------

double sweep(ChainState& state, const Hyperparams& hp, const Dataset& data,
             const SweepPlan& plan, RngStream root, long long sweep_index,
             RegionUpdateStats* region_stats) {
  RngStream s_rng = root.substream((std::uint64_t)sweep_index);
  for (int k = 1; k <= state.K(); ++k) {
    extend_atoms(state, hp, k,
                 s_rng.substream(kPhaseExtend).substream((std::uint64_t)(k - 1)));
  }
  const double loglik =
      draw_slice_and_labels(state, hp, data, plan, s_rng.substream(kPhaseMap));
  update_weights(state, hp, s_rng.substream(kPhaseWeights));
  update_atoms(state, hp, data, plan, s_rng.substream(kPhaseReduce));
  update_beta(state, hp, s_rng.substream(kPhaseBeta));
  update_slice_aux(state, hp, data, s_rng.substream(kPhaseSliceAux));
  const RegionUpdateStats rs =
      update_regions(state, hp, plan, s_rng.substream(kPhaseRegions));
  if (region_stats != nullptr) {
    region_stats->mh_accepts += rs.mh_accepts;
    region_stats->mh_attempts += rs.mh_attempts;
  }
  return loglik;
}

// --- initialization -----------------------------------------------------------------

namespace {

// Lloyd's k-means with k-means++ seeding; returns labels and writes centers.
std::vector<int> kmeans(const Eigen::MatrixXd& pts, int K, RngStream& rng,
                        std::vector<Eigen::VectorXd>* centers) {
  const int n = (int)pts.rows();
  const int m = (int)pts.cols();
  centers->assign(K, Eigen::VectorXd::Zero(m));

  // k-means++ seeding.
  std::vector<double> d2(n, INFINITY);
  {
    const int first = std::min(n - 1, (int)(rng.uniform() * n));
    (*centers)[0] = pts.row(first).transpose();
    for (int k = 1; k < K; ++k) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d =
            (pts.row(i).transpose() - (*centers)[k - 1]).squaredNorm();
        d2[i] = std::min(d2[i], d);
        total += d2[i];
      }
      int pick = 0;
      if (total > 0.0) {
        const double u = rng.uniform() * total;
        double cum = 0.0;
        for (int i = 0; i < n; ++i) {
          cum += d2[i];
          if (u <= cum) {
            pick = i;
            break;
          }
        }
      } else {
        pick = std::min(n - 1, (int)(rng.uniform() * n));
      }
      (*centers)[k] = pts.row(pick).transpose();
    }
  }

  std::vector<int> label(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = INFINITY;
      for (int k = 0; k < K; ++k) {
        const double d = (pts.row(i).transpose() - (*centers)[k]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (best != label[i]) {
        label[i] = best;
        changed = true;
      }
    }
    std::vector<Eigen::VectorXd> sums(K, Eigen::VectorXd::Zero(m));
    std::vector<int> cnt(K, 0);
    for (int i = 0; i < n; ++i) {
      sums[label[i]] += pts.row(i).transpose();
      ++cnt[label[i]];
    }
    for (int k = 0; k < K; ++k) {
      if (cnt[k] > 0) {
        (*centers)[k] = sums[k] / (double)cnt[k];
      } else {
        // Reseed an empty cluster at the point farthest from its center.
        int far_i = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d =
              (pts.row(i).transpose() - (*centers)[label[i]]).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        (*centers)[k] = pts.row(far_i).transpose();
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
  }
  return label;
}

}  // namespace

ChainState init_state(const Dataset& data, const Hyperparams& hp,
                      RngStream rng) {
  const int K = hp.K;
  const int n = data.n();
  const int m = data.m();
  const bool scale = scale_axis(hp);

  ChainState st;
  st.c.resize(K);
  st.r.assign(K, 1.0);
  st.atoms.resize(K);
  st.rho_star_kj.resize(K);
  st.i_star_kj.resize(K);
  st.z.assign(n, 1);
  st.s.assign(n, 0);
  if (scale) st.loc_mean.assign(K, hp.loc_mu0);

  double data_sd = 1.0;
  double data_mean = 0.0;
  if (n > 0) {
    Eigen::VectorXd mu = data.x.colwise().mean();
    data_mean = mu(0);
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      ss += (data.x.row(i).transpose() - mu).squaredNorm();
    }
    data_sd = (n > 1) ? std::sqrt(ss / ((double)(n - 1) * m)) : 1.0;
    if (!(data_sd > 0.0)) data_sd = 1.0;
  }

  std::vector<int> label(n, 0);
  if (hp.regions_fixed) {
    st.c = hp.fixed_centers;
    st.r = hp.fixed_radii;
    if (n > 0) {
      for (int i = 0; i < n; ++i) {
        int best = 0;
        double bd = INFINITY;
        for (int k = 0; k < K; ++k) {
          const double d = scale
                               ? std::fabs(std::fabs(data.x(i, 0) - data_mean) -
                                           st.c[k](0))
                               : (data.x.row(i).transpose() - st.c[k]).norm();
          if (d < bd) {
            bd = d;
            best = k;
          }
        }
        label[i] = best;
      }
    }
  } else if (n == 0) {
    // Prior draw by rejection on region disjointness.
    bool ok = false;
    for (int attempt = 0; attempt < 100000 && !ok; ++attempt) {
      for (int k = 0; k < K; ++k) {
        st.c[k] = Eigen::VectorXd(m);
        for (int d = 0; d < m; ++d) {
          st.c[k](d) = sample_normal(hp.mu0(d), hp.eta, rng);
        }
        st.r[k] = sample_gamma(hp.gamma_shape, hp.gamma_rate, rng);
      }
      ok = (K == 1) || (min_region_gap(st.c, st.r) > 0.0);
    }
    if (!ok) {
      throw NumericalError(
          "init_state: could not draw disjoint regions from the prior");
    }
  } else {
    if (n < K) {
      throw InvalidArgumentError("init_state: need at least K observations");
    }
    Eigen::MatrixXd feats;
    if (scale) {
      feats.resize(n, 1);
      for (int i = 0; i < n; ++i) {
        feats(i, 0) = std::max(std::fabs(data.x(i, 0) - data_mean),
                               1e-8 * data_sd);
      }
    } else {
      feats = data.x;
    }
    label = kmeans(feats, K, rng, &st.c);

    // Radii from coordinatewise max deviation, inflated then shrunk to
    // disjointness.
    std::vector<double> max_dev(K, 0.0);
    for (int i = 0; i < n; ++i) {
      const double d =
          (feats.row(i).transpose() - st.c[label[i]]).cwiseAbs().maxCoeff();
      max_dev[label[i]] = std::max(max_dev[label[i]], d);
    }
    for (int k = 0; k < K; ++k) {
      st.r[k] = std::max(1.5 * max_dev[k], 1e-2 * data_sd);
    }
    // Jitter coincident centers so the shrink factor is well defined.
    for (int a = 0; a < K; ++a) {
      for (int b = a + 1; b < K; ++b) {
        if (linf(st.c[a], st.c[b]) < 1e-12) {
          for (int d = 0; d < st.c[b].size(); ++d) {
            st.c[b](d) += 1e-6 * data_sd * (rng.uniform() - 0.5);
          }
        }
      }
    }
    double lambda = 1.0;
    for (int a = 0; a < K; ++a) {
      for (int b = a + 1; b < K; ++b) {
        const double dist = linf(st.c[a], st.c[b]);
        lambda = std::min(lambda, 0.95 * dist / (st.r[a] + st.r[b]));
      }
    }
    if (lambda < 1.0) {
      for (int k = 0; k < K; ++k) st.r[k] *= lambda;
    }
    if (scale) {
      // Keep sigma intervals inside (0, inf) where possible.
      for (int k = 0; k < K; ++k) {
        st.r[k] = std::min(st.r[k], 0.95 * st.c[k](0));
        st.r[k] = std::max(st.r[k], 1e-4 * data_sd);
      }
      for (int k = 0; k < K; ++k) st.loc_mean[k] = data_mean;
    }
  }

  // One atom per component at the cluster mean; kernel scale from the
  // within-cluster spread.
  std::vector<double> var(K, 0.0);
  std::vector<int> cnt(K, 0);
  if (n > 0 && !scale) {
    for (int i = 0; i < n; ++i) {
      var[label[i]] +=
          (data.x.row(i).transpose() - st.c[label[i]]).squaredNorm() / m;
      ++cnt[label[i]];
    }
  }
  for (int k = 0; k < K; ++k) {
    Atom a;
    if (scale) {
      a.u = Eigen::VectorXd::Constant(1, st.loc_mean[k]);
      a.sigma2 = st.c[k](0) * st.c[k](0);
    } else if (m == 1) {
      a.u = st.c[k];
      a.sigma2 = (cnt[k] > 1) ? std::max(var[k] / cnt[k], 1e-6 * data_sd * data_sd)
                              : hp.theta2 / hp.theta1;
    } else {
      a.u = st.c[k];
      const double v = (cnt[k] > 1)
                           ? std::max(var[k] / cnt[k], 1e-6 * data_sd * data_sd)
                           : 1.0;
      a.sigma = v * Eigen::MatrixXd::Identity(m, m);
    }
    a.beta = sample_beta(1.0, hp.dp_alpha, rng);
    a.refresh_cache();
    st.atoms[k].push_back(std::move(a));
    st.rho_star_kj[k].assign(1, INFINITY);
    st.i_star_kj[k].assign(1, -1);
  }

  for (int i = 0; i < n; ++i) {
    st.z[i] = label[i] + 1;
    st.s[i] = 0;
  }

  // Weights, repulsion auxiliary, slice threshold.
  update_weights(st, hp, rng.substream(1));
  const double zeta = repulsion_zeta(st.c, st.r, hp);
  st.xi = (zeta > 0.0) ? zeta * rng.uniform() : 0.0;
  update_slice_aux(st, hp, data, rng.substream(2));
  return st;
}

// --- run ------------------------------------------------------------------------------

ChainOutput run(const Dataset& data, const Hyperparams& hp,
                const SweepPlan& plan, long long iters, long long burnin,
                long long thin, std::uint64_t seed) {
  data.validate();
  if (burnin < 0 || iters <= burnin) {
    throw InvalidArgumentError("run: requires iters > burnin >= 0");
  }
  if (thin < 1) throw InvalidArgumentError("run: requires thin >= 1");

  Hyperparams h = hp;
  h.finalize(data.m());

  const auto t0 = std::chrono::steady_clock::now();
  RngStream root(seed);
  ChainState state = init_state(data, h, root.substream(kInitTag));

  SweepPlan local = plan;
  ChainOutput out;
  out.hp = h;
  out.loglik.reserve((size_t)iters);
  out.snapshots.reserve((size_t)((iters - burnin + thin - 1) / thin));

  RegionUpdateStats window;       // adaptation window
  RegionUpdateStats post_burnin;  // reported acceptance rate

  for (long long t = 0; t < iters; ++t) {
    RegionUpdateStats* sink = (t < burnin) ? &window : &post_burnin;
    const double ll = sweep(state, h, data, local, root, t, sink);
    out.loglik.push_back(ll);
    if (!std::isfinite(ll)) {
      char msg[96];
      std::snprintf(msg, sizeof(msg),
                    "run: non-finite log-likelihood at iteration %lld", t);
      throw NumericalError(msg);
    }
    if (local.adapt_mh && t < burnin && (t + 1) % 50 == 0 &&
        window.mh_attempts > 0) {
      const double rate =
          (double)window.mh_accepts / (double)window.mh_attempts;
      if (rate < 0.25) local.mh_step *= 0.8;
      if (rate > 0.40) local.mh_step *= 1.25;
      local.mh_step = std::min(std::max(local.mh_step, 1e-3), 10.0);
      window = RegionUpdateStats{};
    }
    if (t >= burnin && (t - burnin) % thin == 0) {
      out.snapshots.push_back(state);
    }
  }

  out.mh_step_final = local.mh_step;
  out.mh_accept_rate =
      (post_burnin.mh_attempts > 0)
          ? (double)post_burnin.mh_accepts / (double)post_burnin.mh_attempts
          : 0.0;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  return out;
}

}  // namespace npmix
