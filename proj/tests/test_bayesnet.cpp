#include <cmath>
#include <vector>

#include "abacus/bayesnet.hpp"
#include "abacus/errors.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace abacus;

namespace {

// z ~ N(0,1), x ~ N(z,1); x observed when present in the map.
BayesianNet toy_net(const Observed& observed, unsigned long long seed) {
  RngState rng(seed);
  BayesianNet net(observed);
  Tensor z = net.add_node("z", DistributionSpec::normal(Tensor(0.0), Tensor(0.0)), rng);
  net.add_node("x", DistributionSpec::normal(z, Tensor(0.0)), rng);
  return net;
}

}  // namespace

TEST_CASE("observation flips a node from sampled to injected") {
  auto prior = toy_net({}, 3);
  CHECK_FALSE(prior.node("x").observed);

  auto posterior = toy_net({{"x", Tensor(1.25)}}, 3);
  CHECK(posterior.node("x").observed);
  CHECK(posterior.output("x").item() == 1.25);
  // the latent still samples, and identically under the same seed
  CHECK(posterior.output("z").item() == prior.output("z").item());
}

TEST_CASE("local log densities match the distribution") {
  auto net = toy_net({{"x", Tensor(0.4)}}, 9);
  double z = net.output("z").item();
  CHECK(net.local_log_prob("z").item() ==
        doctest::Approx(oracles::normal_logpdf(z, 0.0, 1.0)).epsilon(1e-12));
  CHECK(net.local_log_prob("x").item() ==
        doctest::Approx(oracles::normal_logpdf(0.4, z, 1.0)).epsilon(1e-12));

  std::vector<std::string> names{"z", "x"};
  CHECK(net.local_log_prob_sum(names).item() ==
        doctest::Approx(net.local_log_prob("z").item() + net.local_log_prob("x").item()));
}

TEST_CASE("log prob sum broadcasts mixed batch shapes") {
  RngState rng(5);
  Observed obs{{"y", Tensor(0.5)}};
  BayesianNet net(obs);
  Tensor z = net.add_node("z", DistributionSpec::normal(Tensor(0.0), Tensor(0.0)), rng, 4);
  CHECK(z.shape() == Shape{4});
  // the shared scalar observation broadcasts against the batched mean
  net.add_node("y", DistributionSpec::normal(z, Tensor(0.0)), rng);
  std::vector<std::string> names{"z", "y"};
  Tensor total = net.local_log_prob_sum(names);
  CHECK(total.shape() == Shape{4});
  Tensor lz = net.local_log_prob("z");
  Tensor ly = net.local_log_prob("y");
  CHECK(ly.shape() == Shape{4});
  CHECK(total[2] == doctest::Approx(lz[2] + ly[2]));
}

TEST_CASE("duplicate and unknown node names are rejected") {
  RngState rng(1);
  BayesianNet net;
  net.add_node("z", DistributionSpec::normal(Tensor(0.0), Tensor(0.0)), rng);
  CHECK_THROWS_AS(net.add_node("z", DistributionSpec::normal(Tensor(0.0), Tensor(0.0)), rng),
                  ContractError);
  CHECK_THROWS_WITH_AS(net.output("w"), doctest::Contains("w"), ContractError);
  std::vector<std::string> names{"nope"};
  CHECK_THROWS_AS(net.local_log_prob_sum(names), ContractError);
}

TEST_CASE("incompatible observed shape is rejected at the node") {
  RngState rng(1);
  Observed obs{{"z", Tensor::zeros({3})}};
  BayesianNet net(obs);
  CHECK_THROWS_AS(
      net.add_node("z", DistributionSpec::normal(Tensor::zeros({2}), Tensor::zeros({2})), rng),
      ShapeError);
}

TEST_CASE("unconsumed observations are reported") {
  auto net = toy_net({{"x", Tensor(0.0)}, {"typo", Tensor(0.0)}}, 2);
  auto extra = net.unconsumed_observations();
  REQUIRE(extra.size() == 1);
  CHECK(extra[0] == "typo");
}

TEST_CASE("free log_joint evaluates the factorization at injected values") {
  ModelBuilder builder = [](const Observed& obs) { return toy_net(obs, 7); };
  std::vector<std::string> names{"z", "x"};
  Observed at{{"z", Tensor(0.3)}, {"x", Tensor(1.0)}};
  double got = log_joint(builder, at, names).item();
  double want = oracles::normal_logpdf(0.3, 0.0, 1.0) + oracles::normal_logpdf(1.0, 0.3, 1.0);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("n_samples prepends a draw axis") {
  RngState rng(17);
  BayesianNet net;
  Tensor z = net.add_node("z", DistributionSpec::normal(Tensor::zeros({2}), Tensor::zeros({2})),
                          rng, 5);
  CHECK(z.shape() == Shape{5, 2});
  CHECK(net.local_log_prob("z").shape() == Shape{5, 2});
}
