#include "abacus/monte_carlo.hpp"

#include <algorithm>
#include <cmath>

namespace abacus::mc {

Tensor is_loglikelihood(const LogJointFn& log_joint, const Observed& observed,
                        const LatentBundle& proposal) {
  if (proposal.entries.empty()) throw ContractError("is_loglikelihood needs proposal draws");
  if (!proposal.sample_axis) throw ContractError("is_loglikelihood needs a sample axis");
  Observed merged = observed;
  for (const auto& e : proposal.entries) {
    if (observed.count(e.name)) {
      throw ContractError("proposal latent '" + e.name + "' collides with an observed name");
    }
    merged[e.name] = e.sample;
  }
  Tensor lj = log_joint(merged);
  Tensor lq = proposal.entries[0].log_prob;
  for (std::size_t i = 1; i < proposal.entries.size(); ++i) {
    lq = lq + proposal.entries[i].log_prob;
  }
  Tensor lw = lj - lq;
  int axis = *proposal.sample_axis;
  int a = axis < 0 ? axis + static_cast<int>(lw.rank()) : axis;
  if (a < 0 || a >= static_cast<int>(lw.rank())) {
    throw ShapeError("is_loglikelihood: axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(lw.rank()));
  }
  double k = static_cast<double>(lw.shape()[a]);
  return logsumexp(lw, {a}) - Tensor(std::log(k));
}

namespace {

std::size_t event_size(const Tensor& t, std::size_t chains) { return t.size() / chains; }

bool chain_slice_finite(const Tensor& t, std::size_t c, std::size_t ev) {
  auto d = t.data();
  for (std::size_t i = 0; i < ev; ++i) {
    if (!std::isfinite(d[c * ev + i])) return false;
  }
  return true;
}

void validate_positions(const Positions& pos, std::size_t chains, const char* who) {
  if (pos.empty()) throw ContractError(std::string(who) + ": no latent positions");
  for (const auto& [name, t] : pos) {
    if (t.rank() < 1 || t.shape()[0] != chains) {
      throw ShapeError(std::string(who) + ": positions for '" + name + "' have shape " +
                       shape_str(t.shape()) + ", expected leading chain extent " +
                       std::to_string(chains));
    }
  }
}

}  // namespace

HmcState hmc_init(const Positions& initial, const HmcConfig& cfg) {
  if (!(cfg.initial_step_size > 0.0)) throw ContractError("initial_step_size must be > 0");
  if (cfg.n_leapfrogs < 1) throw ContractError("n_leapfrogs must be >= 1");
  if (cfg.n_chains < 1) throw ContractError("n_chains must be >= 1");
  validate_positions(initial, cfg.n_chains, "hmc_init");
  for (const auto& [name, t] : initial) {
    if (!t.all_finite()) {
      throw NumericError("hmc_init: non-finite initial position for '" + name + "'");
    }
  }
  HmcState st;
  st.positions = initial;
  st.step_size = cfg.initial_step_size;
  st.n_leapfrogs = cfg.n_leapfrogs;
  st.dual.mu = std::log(10.0 * cfg.initial_step_size);
  for (const auto& [name, t] : initial) {
    Shape event(t.shape().begin() + 1, t.shape().end());
    st.mass_diag[name] = Tensor::ones(event);
    st.mass_acc.mean[name] = Tensor::zeros(event);
    st.mass_acc.m2[name] = Tensor::zeros(event);
  }
  return st;
}

LeapfrogResult leapfrog(const Positions& positions, const Positions& momenta, double step_size,
                        int n_steps, const GradFn& grad_log_joint,
                        const std::map<std::string, Tensor>& mass_diag) {
  if (n_steps < 1) throw ContractError("leapfrog needs n_steps >= 1");
  LeapfrogResult res;
  res.positions = positions;
  res.momenta = momenta;
  std::size_t chains = positions.begin()->second.shape()[0];
  res.divergent.assign(chains, 0);

  auto flag_divergent = [&](const Positions& grads) {
    for (const auto& [name, g] : grads) {
      std::size_t ev = event_size(g, chains);
      for (std::size_t c = 0; c < chains; ++c) {
        if (!res.divergent[c] && !chain_slice_finite(g, c, ev)) res.divergent[c] = 1;
      }
    }
  };

  auto kick = [&](const Positions& grads, double eps) {
    for (auto& [name, p] : res.momenta) {
      auto pd = p.mutable_data();
      auto gd = grads.at(name).data();
      for (std::size_t i = 0; i < pd.size(); ++i) pd[i] += eps * gd[i];
    }
  };

  auto drift = [&](double eps) {
    for (auto& [name, z] : res.positions) {
      auto zd = z.mutable_data();
      auto pd = res.momenta.at(name).data();
      auto md = mass_diag.at(name).data();
      std::size_t ev = md.size();
      for (std::size_t i = 0; i < zd.size(); ++i) zd[i] += eps * pd[i] / md[i % ev];
    }
  };

  Positions g = grad_log_joint(res.positions);
  flag_divergent(g);
  kick(g, 0.5 * step_size);
  for (int s = 0; s < n_steps; ++s) {
    drift(step_size);
    if (s + 1 < n_steps) {
      g = grad_log_joint(res.positions);
      flag_divergent(g);
      kick(g, step_size);
    }
  }
  g = grad_log_joint(res.positions);
  flag_divergent(g);
  kick(g, 0.5 * step_size);
  return res;
}

namespace {

// Per-chain log target values as plain doubles; lj must hold one value per
// chain.
std::vector<double> eval_log_joint(const LogJointFn& log_joint, const Observed& observed,
                                   const Positions& pos, std::size_t chains) {
  Observed merged = observed;
  for (const auto& [name, t] : pos) merged[name] = t;
  Tensor lj = log_joint(merged);
  if (lj.size() != chains) {
    throw ShapeError("hmc: log joint has shape " + shape_str(lj.shape()) + ", expected " +
                     std::to_string(chains) + " per-chain values");
  }
  return std::vector<double>(lj.data().begin(), lj.data().end());
}

std::vector<double> kinetic_energy(const Positions& momenta,
                                   const std::map<std::string, Tensor>& mass_diag,
                                   std::size_t chains) {
  std::vector<double> k(chains, 0.0);
  for (const auto& [name, p] : momenta) {
    auto pd = p.data();
    auto md = mass_diag.at(name).data();
    std::size_t ev = md.size();
    for (std::size_t c = 0; c < chains; ++c) {
      for (std::size_t i = 0; i < ev; ++i) {
        double v = pd[c * ev + i];
        k[c] += 0.5 * v * v / md[i];
      }
    }
  }
  return k;
}

}  // namespace

HmcInfo hmc_transition(HmcState& state, const LogJointFn& log_joint, const Observed& observed,
                       std::span<RngState> chain_rngs) {
  std::size_t chains = state.positions.begin()->second.shape()[0];
  if (chain_rngs.size() != chains) {
    throw ContractError("hmc_transition: " + std::to_string(chain_rngs.size()) +
                        " rng streams for " + std::to_string(chains) + " chains");
  }

  // Momenta ~ N(0, mass): each chain consumes only its own stream.
  Positions momenta;
  for (const auto& [name, m] : state.mass_diag) {
    Shape shape = state.positions.at(name).shape();
    momenta[name] = Tensor::zeros(shape);
  }
  for (std::size_t c = 0; c < chains; ++c) {
    for (auto& [name, p] : momenta) {
      auto pd = p.mutable_data();
      auto md = state.mass_diag.at(name).data();
      std::size_t ev = md.size();
      for (std::size_t i = 0; i < ev; ++i) {
        pd[c * ev + i] = chain_rngs[c].normal() * std::sqrt(md[i]);
      }
    }
  }

  auto grad_fn = [&](const Positions& pos) -> Positions {
    Tape tape;
    Observed merged = observed;
    std::vector<Tensor> leaves;
    leaves.reserve(pos.size());
    for (const auto& [name, t] : pos) {
      Tensor leaf = tape.leaf(t);
      merged[name] = leaf;
      leaves.push_back(leaf);
    }
    Tensor lj = log_joint(merged);
    Tensor cost = reduce_sum(lj);  // chains are independent rows of the joint
    auto grads = gradients(cost, leaves);
    Positions out;
    std::size_t i = 0;
    for (const auto& [name, t] : pos) out[name] = std::move(grads[i++]);
    return out;
  };

  auto lj_old = eval_log_joint(log_joint, observed, state.positions, chains);
  auto k_old = kinetic_energy(momenta, state.mass_diag, chains);

  LeapfrogResult prop = leapfrog(state.positions, momenta, state.step_size, state.n_leapfrogs,
                                 grad_fn, state.mass_diag);

  auto lj_new = eval_log_joint(log_joint, observed, prop.positions, chains);
  auto k_new = kinetic_energy(prop.momenta, state.mass_diag, chains);

  HmcInfo info;
  info.accepted.assign(chains, 0);
  info.accept_prob.assign(chains, 0.0);
  info.divergent = prop.divergent;
  info.h_old.resize(chains);
  info.h_new.resize(chains);
  info.step_size = state.step_size;

  double acc_sum = 0.0;
  for (std::size_t c = 0; c < chains; ++c) {
    info.h_old[c] = -lj_old[c] + k_old[c];
    info.h_new[c] = -lj_new[c] + k_new[c];
    double ap = 0.0;
    if (!info.divergent[c] && std::isfinite(info.h_new[c])) {
      ap = std::min(1.0, std::exp(info.h_old[c] - info.h_new[c]));
    } else {
      info.divergent[c] = 1;
    }
    info.accept_prob[c] = ap;
    double u = chain_rngs[c].uniform();
    if (u < ap) {
      info.accepted[c] = 1;
      for (auto& [name, z] : state.positions) {
        auto dst = z.mutable_data();
        auto src = prop.positions.at(name).data();
        std::size_t ev = event_size(z, chains);
        for (std::size_t i = 0; i < ev; ++i) dst[c * ev + i] = src[c * ev + i];
      }
    }
    acc_sum += ap;
  }
  info.mean_acceptance = acc_sum / static_cast<double>(chains);
  return info;
}

void adapt_step_size(HmcState& state, double mean_acceptance, const HmcConfig& cfg) {
  constexpr double kGamma = 0.05;
  constexpr double kT0 = 10.0;
  constexpr double kKappa = 0.75;
  auto& d = state.dual;
  d.t += 1;
  double t = static_cast<double>(d.t);
  d.h_bar = (1.0 - 1.0 / (t + kT0)) * d.h_bar + (cfg.target_acceptance - mean_acceptance) / (t + kT0);
  double log_eps = d.mu - std::sqrt(t) / kGamma * d.h_bar;
  double w = std::pow(t, -kKappa);
  d.log_eps_bar = w * log_eps + (1.0 - w) * d.log_eps_bar;
  state.step_size = std::exp(log_eps);
}

void adapt_mass(HmcState& state) {
  std::size_t chains = state.positions.begin()->second.shape()[0];
  auto& acc = state.mass_acc;
  for (std::size_t c = 0; c < chains; ++c) {
    acc.n += 1;
    double n = static_cast<double>(acc.n);
    for (const auto& [name, z] : state.positions) {
      auto zd = z.data();
      auto mean = acc.mean.at(name).mutable_data();
      auto m2 = acc.m2.at(name).mutable_data();
      std::size_t ev = mean.size();
      for (std::size_t i = 0; i < ev; ++i) {
        double x = zd[c * ev + i];
        double delta = x - mean[i];
        mean[i] += delta / n;
        m2[i] += delta * (x - mean[i]);
      }
    }
  }
  if (acc.n < 2) return;
  double n = static_cast<double>(acc.n);
  for (auto& [name, mass] : state.mass_diag) {
    auto md = mass.mutable_data();
    auto m2 = acc.m2.at(name).data();
    for (std::size_t i = 0; i < md.size(); ++i) {
      double var = m2[i] / (n - 1.0);
      double reg = (n / (n + 5.0)) * var + (5.0 / (n + 5.0)) * 1e-3;
      md[i] = 1.0 / reg;
    }
  }
}

HmcDraws hmc_sample(const HmcConfig& cfg, const LogJointFn& log_joint, const Observed& observed,
                    const Positions& latent_init, std::size_t n_draws, RngState& rng) {
  HmcState state = hmc_init(latent_init, cfg);
  auto rngs = rng.split(cfg.n_chains);
  HmcDraws out;

  for (std::size_t i = 0; i < cfg.warmup_iters; ++i) {
    HmcInfo info = hmc_transition(state, log_joint, observed, rngs);
    if (cfg.adapt_step_size) adapt_step_size(state, info.mean_acceptance, cfg);
    if (cfg.adapt_mass && i >= cfg.warmup_iters / 2) adapt_mass(state);
    out.warmup_infos.push_back(std::move(info));
  }
  if (cfg.adapt_step_size && cfg.warmup_iters > 0) {
    state.step_size = std::exp(state.dual.log_eps_bar);
  }

  for (auto& [name, t] : state.positions) out.draws[name] = {};
  for (std::size_t i = 0; i < n_draws; ++i) {
    HmcInfo info = hmc_transition(state, log_joint, observed, rngs);
    out.infos.push_back(std::move(info));
    for (const auto& [name, t] : state.positions) out.draws[name].push_back(t);
  }
  out.final_state = std::move(state);
  return out;
}

HmcDraws hmc_sample(const HmcConfig& cfg, const ModelBuilder& builder, const Observed& observed,
                    const Positions& latent_init, std::size_t n_draws, RngState& rng) {
  LogJointFn fn = [&builder](const Observed& merged) {
    BayesianNet net = builder(merged);
    auto names = net.node_names();
    return net.local_log_prob_sum(names);
  };
  return hmc_sample(cfg, fn, observed, latent_init, n_draws, rng);
}

}  // namespace abacus::mc
