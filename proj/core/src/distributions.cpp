#include "abacus/distributions.hpp"

#include <cmath>
#include <limits>

namespace abacus {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// value shape for a draw: optional sample axis followed by the event shape
Shape draw_shape(const Shape& event, std::optional<std::size_t> n_samples) {
  if (!n_samples) return event;
  Shape s{*n_samples};
  s.insert(s.end(), event.begin(), event.end());
  return s;
}

std::vector<int> trailing_axes(int g) {
  std::vector<int> axes(g);
  for (int i = 0; i < g; ++i) axes[i] = -(i + 1);
  return axes;
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::Normal:
      return "Normal";
    case Family::Bernoulli:
      return "Bernoulli";
    case Family::Categorical:
      return "Categorical";
    case Family::BinConcrete:
      return "BinConcrete";
  }
  return "?";
}

DistributionSpec::DistributionSpec(Family family, Tensor p0, Tensor p1, int group_ndims)
    : family_(family), p0_(std::move(p0)), p1_(std::move(p1)), group_ndims_(group_ndims) {
  if (group_ndims < 0) throw ContractError("group_ndims must be >= 0");
}

DistributionSpec DistributionSpec::normal(Tensor mean, Tensor logstd, int group_ndims) {
  broadcast_shape(mean.shape(), logstd.shape());  // shapes must be compatible
  return DistributionSpec(Family::Normal, std::move(mean), std::move(logstd), group_ndims);
}

DistributionSpec DistributionSpec::bernoulli(Tensor logits, int group_ndims) {
  return DistributionSpec(Family::Bernoulli, std::move(logits), Tensor(), group_ndims);
}

DistributionSpec DistributionSpec::categorical(Tensor logits, int group_ndims) {
  if (logits.rank() < 1 || logits.shape().back() < 1) {
    throw ShapeError("categorical logits need a class axis, got " + shape_str(logits.shape()));
  }
  return DistributionSpec(Family::Categorical, std::move(logits), Tensor(), group_ndims);
}

DistributionSpec DistributionSpec::bin_concrete(Tensor temperature, Tensor logits,
                                                int group_ndims) {
  for (double t : temperature.data()) {
    if (!(t > 0.0)) {
      throw DomainError("bin_concrete temperature must be > 0, got " + std::to_string(t));
    }
  }
  broadcast_shape(temperature.shape(), logits.shape());
  return DistributionSpec(Family::BinConcrete, std::move(temperature), std::move(logits),
                          group_ndims);
}

Shape DistributionSpec::event_shape() const {
  switch (family_) {
    case Family::Normal:
      return broadcast_shape(p0_.shape(), p1_.shape());
    case Family::Bernoulli:
      return p0_.shape();
    case Family::Categorical:
      return Shape(p0_.shape().begin(), p0_.shape().end() - 1);
    case Family::BinConcrete:
      return broadcast_shape(p0_.shape(), p1_.shape());
  }
  return {};
}

const Tensor& DistributionSpec::mean() const {
  if (family_ != Family::Normal) throw ContractError(family_name(family_) + " has no mean param");
  return p0_;
}
const Tensor& DistributionSpec::logstd() const {
  if (family_ != Family::Normal) throw ContractError(family_name(family_) + " has no logstd param");
  return p1_;
}
const Tensor& DistributionSpec::logits() const {
  switch (family_) {
    case Family::Bernoulli:
    case Family::Categorical:
      return p0_;
    case Family::BinConcrete:
      return p1_;
    default:
      throw ContractError("Normal has no logits param");
  }
}
const Tensor& DistributionSpec::temperature() const {
  if (family_ != Family::BinConcrete) {
    throw ContractError(family_name(family_) + " has no temperature param");
  }
  return p0_;
}

Tensor DistributionSpec::log_prob(const Tensor& value) const {
  Tensor per;
  switch (family_) {
    case Family::Normal: {
      Tensor z = (value - p0_) * exp(neg(p1_));
      per = neg(p1_) - Tensor(kHalfLog2Pi) - Tensor(0.5) * square(z);
      break;
    }
    case Family::Bernoulli: {
      for (double v : value.data()) {
        if (v != 0.0 && v != 1.0) {
          throw DomainError("bernoulli value must be 0 or 1, got " + std::to_string(v));
        }
      }
      per = neg(softplus(neg(p0_)) * value) - softplus(p0_) * (Tensor(1.0) - value);
      break;
    }
    case Family::Categorical: {
      Shape lead(p0_.shape().begin(), p0_.shape().end() - 1);
      Shape common = broadcast_shape(value.shape(), lead);
      Shape full = common;
      full.push_back(p0_.shape().back());
      Tensor lse = logsumexp(p0_, {-1});  // over classes, before any broadcast
      Tensor picked = gather_last(broadcast_to(p0_, full), broadcast_to(value, common));
      per = picked - lse;
      break;
    }
    case Family::BinConcrete: {
      for (double v : value.data()) {
        if (!(v > 0.0 && v < 1.0)) {
          throw DomainError("bin_concrete value must lie in (0,1), got " + std::to_string(v));
        }
      }
      const Tensor& lam = p0_;
      const Tensor& alpha = p1_;
      Tensor ly = log(value);
      Tensor l1my = log(Tensor(1.0) - value);
      // log density = log l + a - (l+1)(log y + log(1-y)) - 2*logaddexp(a - l*log y, -l*log(1-y))
      Tensor t1 = alpha - lam * ly;
      Tensor t2 = neg(lam * l1my);
      Tensor lse2 = t1 + softplus(t2 - t1);
      per = log(lam) + alpha - (lam + Tensor(1.0)) * (ly + l1my) - Tensor(2.0) * lse2;
      break;
    }
  }
  int g = group_ndims_;
  if (g == 0) return per;
  if (g > static_cast<int>(per.rank())) {
    throw ShapeError("group_ndims " + std::to_string(g) + " exceeds log density rank " +
                     std::to_string(per.rank()));
  }
  return reduce_sum(per, trailing_axes(g));
}

Tensor DistributionSpec::rsample(RngState& rng, std::optional<std::size_t> n_samples) const {
  if (!reparameterizable()) {
    throw ContractError(family_name(family_) + " has no reparameterized sampler; use sample()");
  }
  Shape shape = draw_shape(event_shape(), n_samples);
  std::size_t n = shape_size(shape);
  if (family_ == Family::Normal) {
    std::vector<double> eps(n);
    for (auto& e : eps) e = rng.normal();
    return p0_ + exp(p1_) * Tensor(shape, std::move(eps));
  }
  // BinConcrete: sigmoid((logits + logistic noise) / temperature)
  std::vector<double> noise(n);
  for (auto& e : noise) {
    double u = rng.uniform();
    e = std::log(u) - std::log1p(-u);
  }
  return sigmoid((p1_ + Tensor(shape, std::move(noise))) / p0_);
}

Tensor DistributionSpec::sample(RngState& rng, std::optional<std::size_t> n_samples) const {
  if (reparameterizable()) {
    throw ContractError(family_name(family_) + " is reparameterizable; use rsample()");
  }
  if (family_ == Family::Bernoulli) {
    Shape event = event_shape();
    Shape shape = draw_shape(event, n_samples);
    std::size_t en = shape_size(event);
    std::vector<double> probs(en);
    auto ld = p0_.data();
    for (std::size_t i = 0; i < en; ++i) probs[i] = stable_sigmoid(ld[i]);
    std::size_t n = shape_size(shape);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = rng.uniform() < probs[i % en] ? 1.0 : 0.0;
    }
    return Tensor(std::move(shape), std::move(out));
  }
  // Categorical: CDF inversion over stable softmax rows.
  Shape lead = event_shape();
  Shape shape = draw_shape(lead, n_samples);
  std::size_t k = p0_.shape().back();
  std::size_t rows = shape_size(lead);
  auto ld = p0_.data();
  std::vector<double> probs(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) m = std::max(m, ld[r * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(ld[r * k + j] - m);
      z += probs[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] /= z;
  }
  std::size_t n = shape_size(shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = i % rows;
    double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = k - 1;  // guard against round-off leaving u unplaced
    for (std::size_t j = 0; j < k; ++j) {
      acc += probs[r * k + j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    out[i] = static_cast<double>(pick);
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace abacus
