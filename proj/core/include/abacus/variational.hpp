#pragma once

#include <optional>

#include "abacus/bayesnet.hpp"

namespace abacus::variational {

// Samples and log densities of the variational posterior, one entry per
// latent name. When several draws per latent are stacked, sample_axis says
// which axis indexes them (axis 0 by convention).
struct LatentBundle {
  struct Entry {
    std::string name;
    Tensor sample;
    Tensor log_prob;
  };
  std::vector<Entry> entries;
  std::optional<int> sample_axis;

  void add(std::string name, Tensor sample, Tensor log_prob);

  static LatentBundle from_net(const BayesianNet& net, std::span<const std::string> names,
                               std::optional<int> sample_axis = {});
};

enum class ObjectiveKind { Elbo, Iw, Klpq };

// Joint and posterior log densities evaluated on a common set of draws,
// plus the bound those values induce. Estimator-specific costs are derived
// from one of these; reading the bound never mutates optimizer state.
class VariationalObjective {
 public:
  ObjectiveKind kind() const { return kind_; }
  const Tensor& log_joint_values() const { return log_joint_; }
  const Tensor& log_q_values() const { return log_q_; }
  std::optional<int> sample_axis() const { return axis_; }
  const LatentBundle& latent() const { return latent_; }

  // Scalar-per-batch bound: mean ELBO or the log-mean-weight IW bound.
  // A klpq objective estimates no bound; asking for one is an error.
  const Tensor& bound() const;

 private:
  friend VariationalObjective make_objective(ObjectiveKind, const LogJointFn&, const Observed&,
                                             const LatentBundle&);
  VariationalObjective() = default;

  ObjectiveKind kind_ = ObjectiveKind::Elbo;
  Tensor log_joint_;
  Tensor log_q_;
  std::optional<int> axis_;
  std::optional<Tensor> bound_;
  LatentBundle latent_;
};

VariationalObjective elbo(const LogJointFn& log_joint, const Observed& observed,
                          const LatentBundle& latent);
VariationalObjective iw_objective(const LogJointFn& log_joint, const Observed& observed,
                                  const LatentBundle& latent);
VariationalObjective klpq(const LogJointFn& log_joint, const Observed& observed,
                          const LatentBundle& latent);

// Scalar moving-average control variate for the score-function estimator.
struct BaselineState {
  double decay = 0.99;
  double value = 0.0;
  bool initialized = false;

  void update(double mean_signal) {
    value = initialized ? decay * value + (1.0 - decay) * mean_signal : mean_signal;
    initialized = true;
  }
};

// Pathwise estimator: cost = -bound, differentiated through the samples.
// Latents drawn without a gradient path are a contract error.
Tensor sgvb_cost(const VariationalObjective& obj);

// Score-function estimator for the ELBO. Uses the baseline as-is, then
// folds mean(log_joint - log_q) of this batch into it.
Tensor reinforce_cost(const VariationalObjective& obj, BaselineState& baseline);

// Multi-sample score-function estimator with leave-one-out control
// variates; needs an iw objective with at least two samples on the axis.
Tensor vimco_cost(const VariationalObjective& obj);

// Wake-phase proposal update: self-normalized importance weights (blocked)
// times log q, negated. Takes a klpq objective.
Tensor rws_cost(const VariationalObjective& obj);

Tensor klpq_rws_cost(const LogJointFn& log_joint, const Observed& observed,
                     const LatentBundle& latent);

}  // namespace abacus::variational
