#ifndef NPMIX_SAMPLER_HPP
#define NPMIX_SAMPLER_HPP

// The slice sampler for the region-restricted mixture of DP mixtures: atom
// extension against the slice threshold, the map step (slice + label draws),
// conjugate weight/atom/stick updates, slice-auxiliary refresh, and the
// repulsive-prior region moves (conjugate center, Metropolis-Hastings
// radius). Map and reduce phases run over fixed observation blocks with
// per-index RNG substreams, so results are identical at any thread count.

#include <cstdint>
#include <vector>

#include "npmix/model.hpp"
#include "npmix/rngdist.hpp"

namespace npmix {

struct SweepPlan {
  bool parallel = false;
  int thread_count = 0;  // 0 = hardware concurrency
  double mh_step = 0.5;  // log-scale random-walk step for radius moves
  bool adapt_mh = true;  // tune mh_step during burn-in only
};

struct ChainOutput {
  std::vector<ChainState> snapshots;
  std::vector<double> loglik;  // one entry per iteration
  double mh_accept_rate = 0.0; // radius MH acceptance over post-burn-in sweeps
  double mh_step_final = 0.0;
  double seconds = 0.0;
  Hyperparams hp;              // finalized hyperparameters used by the run
};

// --- conjugate-update parameter helpers (exact formulas, unit-testable) ----

struct NormalPosterior {
  double mean = 0.0;
  double sd = 0.0;
};

// Posterior of a normal mean: prior N(prior_mean, prior_sd^2), n observations
// of variance obs_var summing to sum_obs. Serves both the atom-mean update
// (prior center c_k, spread sigma0, kernel variance) and the region-center
// update (prior mu0, spread eta, atom spread sigma0).
NormalPosterior conjugate_normal_posterior(double prior_mean, double prior_sd,
                                           double obs_var, double sum_obs,
                                           long long n);

struct InverseGammaPosterior {
  double shape = 0.0;
  double scale = 0.0;
};

// Posterior of a kernel variance: InvGamma(theta1, theta2) prior, n residuals
// with sum of squares sum_sq_dev.
InverseGammaPosterior inverse_gamma_posterior(double theta1, double theta2,
                                              long long n, double sum_sq_dev);

// Posterior Dirichlet parameters: conc + count per cell.
std::vector<double> dirichlet_posterior(double conc,
                                        const std::vector<long long>& counts);

// The separation floor implied by the repulsion auxiliary: gaps must exceed
// g*(xi) = (tau / -log(xi))^(1/nu); 0 when xi = 0.
double repulsion_gap_floor(double xi, const Hyperparams& hp);

// --- sweep phases (Algorithm order; k is 1-based where present) -------------

// Grows component k's atom list until its remaining stick mass drops below
// the global slice threshold. Throws NumericalError past 10^6 atoms (a
// degenerate threshold).
void extend_atoms(ChainState& state, const Hyperparams& hp, int k,
                  RngStream rng);

// Map step: reconstructs each observation's slice variable, then redraws its
// component and atom labels. Returns the summed log mixture density of the
// data under the pre-update state (block-ordered reduction). Parallel over
// fixed blocks of 4096 observations.
double draw_slice_and_labels(ChainState& state, const Hyperparams& hp,
                             const Dataset& data, const SweepPlan& plan,
                             RngStream rng);

void update_weights(ChainState& state, const Hyperparams& hp, RngStream rng);

// Reduce step: conjugate redraw of every active atom's (u, sigma) from its
// cluster's sufficient statistics; empty clusters refresh from the base
// measure.
void update_atoms(ChainState& state, const Hyperparams& hp,
                  const Dataset& data, const SweepPlan& plan, RngStream rng);

// Joint Dirichlet over each component's stick weights (occupied counts plus
// dp_alpha remainder); zero-count atoms receive exactly zero weight and are
// garbage-collected, with observation atom labels remapped.
void update_beta(ChainState& state, const Hyperparams& hp, RngStream rng);

// Per-occupied-atom minimum slice values, argmin indices, and the global
// threshold rho_star.
void update_slice_aux(ChainState& state, const Hyperparams& hp,
                      const Dataset& data, RngStream rng);

struct RegionUpdateStats {
  long long mh_accepts = 0;
  long long mh_attempts = 0;
};

// Repulsion auxiliary xi, conjugate center draws restricted to the feasible
// set, and the radius MH step. No-op when hp.regions_fixed.
RegionUpdateStats update_regions(ChainState& state, const Hyperparams& hp,
                                 const SweepPlan& plan, RngStream rng);

// One full sweep in the fixed phase order. sweep_index seeds the per-phase
// RNG substreams. Returns the map step's log-likelihood value.
double sweep(ChainState& state, const Hyperparams& hp, const Dataset& data,
             const SweepPlan& plan, RngStream root, long long sweep_index,
             RegionUpdateStats* region_stats = nullptr);

// Initial state: k-means regions (prior draw when n = 0), one atom per
// component, labels from nearest centers, slice auxiliaries refreshed.
ChainState init_state(const Dataset& data, const Hyperparams& hp,
                      RngStream rng);

// Full chain: init, burn-in with MH-step adaptation, thinned snapshots.
// Snapshot count is ceil((iters - burnin) / thin). Throws NumericalError
// (with the iteration index) if the log-likelihood turns non-finite.
ChainOutput run(const Dataset& data, const Hyperparams& hp,
                const SweepPlan& plan, long long iters, long long burnin,
                long long thin, std::uint64_t seed);

}  // namespace npmix

#endif  // NPMIX_SAMPLER_HPP
