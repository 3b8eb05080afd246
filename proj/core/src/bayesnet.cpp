#include "abacus/bayesnet.hpp"

namespace abacus {

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out.empty() ? "(none)" : out;
}

}  // namespace

BayesianNet::BayesianNet(Observed observed) : observed_(std::move(observed)) {}

Tensor BayesianNet::add_node(const std::string& name, DistributionSpec dist, RngState& rng,
                             std::optional<std::size_t> n_samples) {
  if (index_.count(name)) {
    throw ContractError("node '" + name + "' already registered");
  }
  StochasticNode node{name, std::move(dist), false, Tensor()};
  auto it = observed_.find(name);
  if (it != observed_.end()) {
    // Observation must be broadcast-compatible with the event shape, or
    // log_prob could never be formed. Fail here with the node named.
    try {
      broadcast_shape(it->second.shape(), node.dist.event_shape());
    } catch (const ShapeError&) {
      throw ShapeError("observation for '" + name + "' has shape " +
                       shape_str(it->second.shape()) + ", incompatible with event shape " +
                       shape_str(node.dist.event_shape()));
    }
    node.observed = true;
    node.value = it->second;
  } else if (node.dist.reparameterizable()) {
    node.value = node.dist.rsample(rng, n_samples);
  } else {
    node.value = node.dist.sample(rng, n_samples);
  }
  index_[name] = nodes_.size();
  nodes_.push_back(std::move(node));
  return nodes_.back().value;
}

bool BayesianNet::has_node(const std::string& name) const { return index_.count(name) > 0; }

const StochasticNode& BayesianNet::lookup(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("unknown node '" + name + "'; net has: " + join_names(node_names()));
  }
  return nodes_[it->second];
}

const StochasticNode& BayesianNet::node(const std::string& name) const { return lookup(name); }

std::vector<std::string> BayesianNet::node_names() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(n.name);
  return out;
}

Tensor BayesianNet::output(const std::string& name) const { return lookup(name).value; }

Tensor BayesianNet::local_log_prob(const std::string& name) const {
  const StochasticNode& n = lookup(name);
  return n.dist.log_prob(n.value);
}

std::vector<BayesianNet::Query> BayesianNet::query(std::span<const std::string> names,
                                                   bool want_outputs, bool want_log_probs) const {
  std::vector<Query> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    Query q;
    q.name = name;
    if (want_outputs) q.output = output(name);
    if (want_log_probs) q.local_log_prob = local_log_prob(name);
    out.push_back(std::move(q));
  }
  return out;
}

Tensor BayesianNet::local_log_prob_sum(std::span<const std::string> names) const {
  if (names.empty()) return Tensor(0.0);
  Tensor total = local_log_prob(names[0]);
  for (std::size_t i = 1; i < names.size(); ++i) {
    total = total + local_log_prob(names[i]);
  }
  return total;
}

std::vector<std::string> BayesianNet::unconsumed_observations() const {
  std::vector<std::string> out;
  for (const auto& [name, value] : observed_) {
    if (!index_.count(name)) out.push_back(name);
  }
  return out;
}

Tensor log_joint(const ModelBuilder& builder, const Observed& observed,
                 std::span<const std::string> node_names) {
  BayesianNet net = builder(observed);
  return net.local_log_prob_sum(node_names);
}

}  // namespace abacus
