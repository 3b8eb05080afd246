#pragma once

#include <optional>
#include <string>

#include "abacus/random.hpp"
#include "abacus/tensor.hpp"

namespace abacus {

enum class Family { Normal, Bernoulli, Categorical, BinConcrete };

std::string family_name(Family f);

// A distribution family bound to parameter tensors. Parameters may be tape
// tracked; log_prob and rsample are built from recorded ops, so gradients
// flow into them wherever the math allows.
//
// group_ndims sums the trailing axes of the per-element log density, turning
// a batch of independent scalars into one multivariate event.
class DistributionSpec {
 public:
  static DistributionSpec normal(Tensor mean, Tensor logstd, int group_ndims = 0);
  static DistributionSpec bernoulli(Tensor logits, int group_ndims = 0);
  // logits[..., k] are unnormalized class scores; values are integer indices.
  static DistributionSpec categorical(Tensor logits, int group_ndims = 0);
  // Binary Concrete relaxation with temperature > 0; values live in (0,1).
  static DistributionSpec bin_concrete(Tensor temperature, Tensor logits, int group_ndims = 0);

  Family family() const { return family_; }
  int group_ndims() const { return group_ndims_; }
  bool reparameterizable() const {
    return family_ == Family::Normal || family_ == Family::BinConcrete;
  }

  // Shape of one draw before any sample axis is prepended.
  Shape event_shape() const;

  const Tensor& mean() const;
  const Tensor& logstd() const;
  const Tensor& logits() const;
  const Tensor& temperature() const;

  // Log density of `value`, broadcast against the parameters, with the
  // trailing group_ndims axes summed out.
  Tensor log_prob(const Tensor& value) const;

  // Reparameterized draw (Normal, BinConcrete): gradients flow to params.
  Tensor rsample(RngState& rng, std::optional<std::size_t> n_samples = {}) const;

  // Plain draw (Bernoulli, Categorical): a constant with no gradient path.
  Tensor sample(RngState& rng, std::optional<std::size_t> n_samples = {}) const;

 private:
  DistributionSpec(Family family, Tensor p0, Tensor p1, int group_ndims);

  Family family_;
  Tensor p0_;  // mean | logits | temperature
  Tensor p1_;  // logstd | unused | logits
  int group_ndims_;
};

}  // namespace abacus
