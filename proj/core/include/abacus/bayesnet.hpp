#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "abacus/distributions.hpp"

namespace abacus {

using Observed = std::map<std::string, Tensor>;

struct StochasticNode {
  std::string name;
  DistributionSpec dist;
  bool observed = false;
  Tensor value;
};

// Directed model assembled by running model code once against a fixed
// observation map. A name present in the map makes that node observed (its
// value is the injected tensor); otherwise the node samples from its
// distribution. Reuse comes from re-invoking the builder with different
// observations, never from mutating an existing net.
class BayesianNet {
 public:
  explicit BayesianNet(Observed observed = {});

  // Registers a stochastic node and returns its value tensor.
  Tensor add_node(const std::string& name, DistributionSpec dist, RngState& rng,
                  std::optional<std::size_t> n_samples = {});

  bool has_node(const std::string& name) const;
  const StochasticNode& node(const std::string& name) const;
  std::vector<std::string> node_names() const;

  Tensor output(const std::string& name) const;

  // Log density of the node's value under its own distribution, with the
  // node's group_ndims applied.
  Tensor local_log_prob(const std::string& name) const;

  struct Query {
    std::string name;
    Tensor output;
    Tensor local_log_prob;
  };
  std::vector<Query> query(std::span<const std::string> names, bool want_outputs,
                           bool want_log_probs) const;

  // Sum of the named local log densities, broadcast to a common batch shape.
  Tensor local_log_prob_sum(std::span<const std::string> names) const;

  // Observation keys never claimed by add_node; worth a warning upstream.
  std::vector<std::string> unconsumed_observations() const;

 private:
  const StochasticNode& lookup(const std::string& name) const;

  Observed observed_;
  std::vector<StochasticNode> nodes_;
  std::map<std::string, std::size_t> index_;
};

using ModelBuilder = std::function<BayesianNet(const Observed&)>;
using LogJointFn = std::function<Tensor(const Observed&)>;

// Builds the net with `observed` injected and sums the named local log
// densities: the joint factorization evaluated at the injected values.
Tensor log_joint(const ModelBuilder& builder, const Observed& observed,
                 std::span<const std::string> node_names);

}  // namespace abacus
