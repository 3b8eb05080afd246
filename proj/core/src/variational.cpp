#include "abacus/variational.hpp"

#include <cmath>
#include <limits>

namespace abacus::variational {

namespace {

// Iterates slices along `axis` of a tensor with shape `s`: outer runs over
// the axes before it, inner over the axes after, k along the axis itself.
struct AxisWalk {
  std::size_t outer, k, inner;
  explicit AxisWalk(const Shape& s, std::size_t axis) {
    outer = inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    k = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  }
  std::size_t at(std::size_t o, std::size_t kk, std::size_t i) const {
    return (o * k + kk) * inner + i;
  }
};

std::size_t normalize_axis(int axis, std::size_t rank, const char* who) {
  int a = axis < 0 ? axis + static_cast<int>(rank) : axis;
  if (a < 0 || a >= static_cast<int>(rank)) {
    throw ShapeError(std::string(who) + ": sample axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

}  // namespace

void LatentBundle::add(std::string name, Tensor sample, Tensor log_prob) {
  for (const auto& e : entries) {
    if (e.name == name) throw ContractError("latent '" + name + "' added twice");
  }
  entries.push_back({std::move(name), std::move(sample), std::move(log_prob)});
}

LatentBundle LatentBundle::from_net(const BayesianNet& net, std::span<const std::string> names,
                                    std::optional<int> sample_axis) {
  LatentBundle out;
  out.sample_axis = sample_axis;
  for (const auto& name : names) {
    out.add(name, net.output(name), net.local_log_prob(name));
  }
  return out;
}

VariationalObjective make_objective(ObjectiveKind kind, const LogJointFn& log_joint,
                                    const Observed& observed, const LatentBundle& latent) {
  if (latent.entries.empty()) throw ContractError("objective needs at least one latent");
  Observed merged = observed;
  for (const auto& e : latent.entries) {
    if (observed.count(e.name)) {
      throw ContractError("latent '" + e.name + "' collides with an observed name");
    }
    merged[e.name] = e.sample;
  }

  VariationalObjective obj;
  obj.kind_ = kind;
  obj.latent_ = latent;
  obj.log_joint_ = log_joint(merged);
  Tensor lq = latent.entries[0].log_prob;
  for (std::size_t i = 1; i < latent.entries.size(); ++i) {
    lq = lq + latent.entries[i].log_prob;
  }
  obj.log_q_ = std::move(lq);

  Tensor lw = obj.log_joint_ - obj.log_q_;
  if (latent.sample_axis) {
    obj.axis_ = static_cast<int>(
        normalize_axis(*latent.sample_axis, lw.rank(), "variational objective"));
  }

  switch (kind) {
    case ObjectiveKind::Elbo:
      obj.bound_ = obj.axis_ ? reduce_mean(lw, {*obj.axis_}) : lw;
      break;
    case ObjectiveKind::Iw: {
      if (!obj.axis_) throw ContractError("iw objective needs a sample axis");
      double k = static_cast<double>(lw.shape()[*obj.axis_]);
      if (k < 1) throw ContractError("iw objective needs at least one sample");
      obj.bound_ = logsumexp(lw, {*obj.axis_}) - Tensor(std::log(k));
      break;
    }
    case ObjectiveKind::Klpq:
      if (!obj.axis_) throw ContractError("klpq objective needs a sample axis");
      break;
  }
  return obj;
}

const Tensor& VariationalObjective::bound() const {
  if (!bound_) {
    throw ContractError("klpq objective does not estimate a bound; optimize rws_cost instead");
  }
  return *bound_;
}

VariationalObjective elbo(const LogJointFn& log_joint, const Observed& observed,
                          const LatentBundle& latent) {
  return make_objective(ObjectiveKind::Elbo, log_joint, observed, latent);
}

VariationalObjective iw_objective(const LogJointFn& log_joint, const Observed& observed,
                                  const LatentBundle& latent) {
  return make_objective(ObjectiveKind::Iw, log_joint, observed, latent);
}

VariationalObjective klpq(const LogJointFn& log_joint, const Observed& observed,
                          const LatentBundle& latent) {
  return make_objective(ObjectiveKind::Klpq, log_joint, observed, latent);
}

Tensor sgvb_cost(const VariationalObjective& obj) {
  if (obj.kind() == ObjectiveKind::Klpq) {
    throw ContractError("sgvb_cost needs an elbo or iw objective");
  }
  for (const auto& e : obj.latent().entries) {
    if (!e.sample.has_node()) {
      throw ContractError("sgvb_cost: samples of latent '" + e.name +
                          "' carry no gradients; use a score-function estimator");
    }
  }
  return neg(obj.bound());
}

Tensor reinforce_cost(const VariationalObjective& obj, BaselineState& baseline) {
  if (obj.kind() != ObjectiveKind::Elbo) {
    throw ContractError("reinforce_cost needs an elbo objective");
  }
  const Tensor& lj = obj.log_joint_values();
  const Tensor& lq = obj.log_q_values();
  Tensor l = stop_gradient(lj - lq);
  double b = baseline.initialized ? baseline.value : 0.0;
  Tensor surrogate = (l - Tensor(b)) * lq + (lj - lq);
  Tensor cost = neg(surrogate);
  if (obj.sample_axis()) cost = reduce_mean(cost, {*obj.sample_axis()});

  double mean_l = 0.0;
  for (double v : l.data()) mean_l += v;
  baseline.update(mean_l / static_cast<double>(l.size()));
  return cost;
}

Tensor vimco_cost(const VariationalObjective& obj) {
  if (obj.kind() != ObjectiveKind::Iw) throw ContractError("vimco_cost needs an iw objective");
  std::size_t axis = static_cast<std::size_t>(*obj.sample_axis());
  const Tensor& lj = obj.log_joint_values();
  const Tensor& lq = obj.log_q_values();
  Tensor lw = lj - lq;
  AxisWalk w(lw.shape(), axis);
  if (w.k < 2) throw ContractError("vimco_cost needs at least two samples on the axis");

  // Leave-one-out learning signals, gradient-blocked by construction: the
  // i-th log weight is replaced by the mean of the others, and the signal
  // is the drop in the K-sample bound caused by that replacement.
  // The -log K halves of the two bounds cancel in the difference, so raw
  // logsumexp values suffice here.
  auto lwd = lw.data();
  std::vector<double> s(lw.size());
  std::vector<double> slice(w.k);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < w.outer; ++o) {
    for (std::size_t i = 0; i < w.inner; ++i) {
      double total = 0.0;
      for (std::size_t kk = 0; kk < w.k; ++kk) {
        slice[kk] = lwd[w.at(o, kk, i)];
        total += slice[kk];
      }
      auto lse_replacing = [&](std::size_t skip, double repl) {
        double m = repl;
        for (std::size_t kk = 0; kk < w.k; ++kk) {
          if (kk != skip) m = std::max(m, slice[kk]);
        }
        if (m == -kInf) return m;
        double acc = repl == -kInf ? 0.0 : std::exp(repl - m);
        for (std::size_t kk = 0; kk < w.k; ++kk) {
          if (kk != skip && slice[kk] != -kInf) acc += std::exp(slice[kk] - m);
        }
        return m + std::log(acc);
      };
      for (std::size_t kk = 0; kk < w.k; ++kk) {
        double l_hat = lse_replacing(kk, slice[kk]);  // plain K-sample logsumexp
        double held_out = (total - slice[kk]) / static_cast<double>(w.k - 1);
        s[w.at(o, kk, i)] = l_hat - lse_replacing(kk, held_out);
      }
    }
  }
  Tensor signal(lw.shape(), std::move(s));
  Tensor score = reduce_sum(signal * lq, {static_cast<int>(axis)});
  return neg(score + obj.bound());
}

Tensor rws_cost(const VariationalObjective& obj) {
  if (obj.kind() != ObjectiveKind::Klpq) throw ContractError("rws_cost needs a klpq objective");
  std::size_t axis = static_cast<std::size_t>(*obj.sample_axis());
  const Tensor& lj = obj.log_joint_values();
  const Tensor& lq = obj.log_q_values();
  Tensor lw = stop_gradient(lj - lq);
  AxisWalk w(lw.shape(), axis);

  // Self-normalized weights along the sample axis; constants w.r.t. the tape.
  auto lwd = lw.data();
  std::vector<double> wt(lw.size());
  for (std::size_t o = 0; o < w.outer; ++o) {
    for (std::size_t i = 0; i < w.inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t kk = 0; kk < w.k; ++kk) m = std::max(m, lwd[w.at(o, kk, i)]);
      double z = 0.0;
      for (std::size_t kk = 0; kk < w.k; ++kk) {
        double e = m == -std::numeric_limits<double>::infinity()
                       ? 0.0
                       : std::exp(lwd[w.at(o, kk, i)] - m);
        wt[w.at(o, kk, i)] = e;
        z += e;
      }
      for (std::size_t kk = 0; kk < w.k; ++kk) {
        wt[w.at(o, kk, i)] = z == 0.0 ? 1.0 / static_cast<double>(w.k) : wt[w.at(o, kk, i)] / z;
      }
    }
  }
  Tensor weights(lw.shape(), std::move(wt));
  return neg(reduce_sum(weights * lq, {static_cast<int>(axis)}));
}

Tensor klpq_rws_cost(const LogJointFn& log_joint, const Observed& observed,
                     const LatentBundle& latent) {
  return rws_cost(klpq(log_joint, observed, latent));
}

}  // namespace abacus::variational
