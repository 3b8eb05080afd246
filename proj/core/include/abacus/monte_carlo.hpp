#pragma once

#include <map>

#include "abacus/variational.hpp"

namespace abacus::mc {

using abacus::variational::LatentBundle;

// Self-normalized importance-sampling estimate of log p(observed): the
// logsumexp over the proposal's sample axis of (log joint - log proposal),
// minus log K. Shares draws and shapes with the iw objective on purpose.
Tensor is_loglikelihood(const LogJointFn& log_joint, const Observed& observed,
                        const LatentBundle& proposal);

// Latent positions keyed by node name, each [n_chains, event...].
using Positions = std::map<std::string, Tensor>;

struct HmcConfig {
  double initial_step_size = 0.1;
  int n_leapfrogs = 10;
  bool adapt_step_size = true;
  double target_acceptance = 0.8;
  bool adapt_mass = true;
  std::size_t n_chains = 1;
  std::size_t warmup_iters = 0;
};

// Nesterov dual averaging on log step size.
struct DualAveragingState {
  double mu = 0.0;  // log(10 * initial step size)
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  std::int64_t t = 0;
};

// Welford accumulator pooled over chains and warm-up iterations.
struct MassAccumulator {
  std::int64_t n = 0;
  std::map<std::string, Tensor> mean;  // event-shaped
  std::map<std::string, Tensor> m2;
};

struct HmcState {
  Positions positions;
  double step_size = 0.1;
  int n_leapfrogs = 10;
  std::map<std::string, Tensor> mass_diag;  // event-shaped, shared across chains
  DualAveragingState dual;
  MassAccumulator mass_acc;
};

HmcState hmc_init(const Positions& initial, const HmcConfig& cfg);

struct HmcInfo {
  std::vector<std::uint8_t> accepted;   // per chain
  std::vector<double> accept_prob;      // min(1, exp(H_old - H_new)); 0 when divergent
  std::vector<std::uint8_t> divergent;  // non-finite Hamiltonian or gradient
  std::vector<double> h_old;
  std::vector<double> h_new;
  double mean_acceptance = 0.0;
  double step_size = 0.0;
};

using GradFn = std::function<Positions(const Positions&)>;

struct LeapfrogResult {
  Positions positions;
  Positions momenta;
  std::vector<std::uint8_t> divergent;
};

// Stormer-Verlet integration of Hamiltonian dynamics: half kick, n-1 full
// drift+kick pairs, final drift, half kick. Momenta are scaled by the
// inverse mass during drifts. Chains integrate independently; a chain that
// produces a non-finite gradient is flagged divergent.
LeapfrogResult leapfrog(const Positions& positions, const Positions& momenta, double step_size,
                        int n_steps, const GradFn& grad_log_joint,
                        const std::map<std::string, Tensor>& mass_diag);

// One Metropolis-adjusted HMC step per chain. Momenta are drawn N(0, mass),
// each chain from its own stream, so permuting chains and streams together
// permutes the results. Divergent proposals are rejected outright.
HmcInfo hmc_transition(HmcState& state, const LogJointFn& log_joint, const Observed& observed,
                       std::span<RngState> chain_rngs);

// Dual-averaging update toward the target acceptance rate; call once per
// warm-up transition with that transition's mean acceptance probability.
void adapt_step_size(HmcState& state, double mean_acceptance, const HmcConfig& cfg);

// Pools the current chain positions into the variance accumulator and
// refreshes mass_diag from the regularized estimate. Meant for the second
// half of warm-up; with fewer than two pooled samples the mass stays put.
void adapt_mass(HmcState& state);

struct HmcDraws {
  std::map<std::string, std::vector<Tensor>> draws;  // post-warm-up only
  std::vector<HmcInfo> warmup_infos;
  std::vector<HmcInfo> infos;
  HmcState final_state;
};

// Full driver: warm-up with step-size and mass adaptation (mass pooling
// starts at the warm-up midpoint), step size frozen at the dual-averaging
// estimate afterwards, then n_draws recorded transitions.
HmcDraws hmc_sample(const HmcConfig& cfg, const LogJointFn& log_joint, const Observed& observed,
                    const Positions& latent_init, std::size_t n_draws, RngState& rng);

// Same, with the target built from a model: the log joint is the sum of all
// node local log densities with positions and observations injected.
HmcDraws hmc_sample(const HmcConfig& cfg, const ModelBuilder& builder, const Observed& observed,
                    const Positions& latent_init, std::size_t n_draws, RngState& rng);

}  // namespace abacus::mc
