#include <cmath>
#include <vector>

#include "abacus/errors.hpp"
#include "abacus/variational.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace abacus;
namespace var = abacus::variational;

namespace {

Tensor filled(const Shape& shape, std::initializer_list<double> values) {
  return Tensor(shape, std::vector<double>(values));
}

// A stub joint that reads the merged value map directly, so every log
// density below is hand-checkable.
LogJointFn quadratic_joint() {
  return [](const Observed& v) {
    Tensor z = v.at("z");
    return neg(square(z));
  };
}

var::LatentBundle fixed_bundle(Tensor sample, Tensor log_q, std::optional<int> axis) {
  var::LatentBundle b;
  b.sample_axis = axis;
  b.add("z", std::move(sample), std::move(log_q));
  return b;
}

}  // namespace

TEST_CASE("elbo bound averages log_joint minus log_q over the sample axis") {
  Tensor z = filled({2}, {1.0, 2.0});
  Tensor lq = filled({2}, {-0.5, -1.5});
  auto obj = var::elbo(quadratic_joint(), {}, fixed_bundle(z, lq, 0));
  CHECK(obj.kind() == var::ObjectiveKind::Elbo);
  // terms: (-1 - (-0.5)) = -0.5 and (-4 - (-1.5)) = -2.5, mean -1.5
  CHECK(obj.bound().item() == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(obj.log_joint_values()[1] == doctest::Approx(-4.0));
}

TEST_CASE("elbo without a sample axis keeps the batch shape") {
  Tensor z = filled({3}, {0.0, 1.0, -1.0});
  Tensor lq = filled({3}, {0.0, 0.0, 0.0});
  auto obj = var::elbo(quadratic_joint(), {}, fixed_bundle(z, lq, std::nullopt));
  CHECK(obj.bound().shape() == Shape{3});
  CHECK(obj.bound()[2] == doctest::Approx(-1.0));
}

TEST_CASE("iw bound is the log mean importance weight") {
  Tensor z = filled({2}, {1.0, 2.0});
  Tensor lq = filled({2}, {-0.5, -1.5});
  auto obj = var::iw_objective(quadratic_joint(), {}, fixed_bundle(z, lq, 0));
  double want = oracles::logaddexp(-0.5, -2.5) - std::log(2.0);
  CHECK(obj.bound().item() == doctest::Approx(want).epsilon(1e-12));

  SUBCASE("iw needs the sample axis") {
    CHECK_THROWS_AS(var::iw_objective(quadratic_joint(), {}, fixed_bundle(z, lq, std::nullopt)),
                    ContractError);
  }
}

TEST_CASE("multi-sample bounds are ordered on a fixed draw set") {
  Tensor z = filled({4}, {0.2, -0.8, 1.4, 0.6});
  Tensor lq = filled({4}, {-1.0, -0.7, -2.0, -0.9});
  auto e = var::elbo(quadratic_joint(), {}, fixed_bundle(z, lq, 0));
  auto iw = var::iw_objective(quadratic_joint(), {}, fixed_bundle(z, lq, 0));
  CHECK(e.bound().item() <= iw.bound().item() + 1e-12);
}

TEST_CASE("klpq objective has no bound") {
  Tensor z = filled({2}, {1.0, 2.0});
  Tensor lq = filled({2}, {-0.5, -1.5});
  auto obj = var::klpq(quadratic_joint(), {}, fixed_bundle(z, lq, 0));
  CHECK(obj.kind() == var::ObjectiveKind::Klpq);
  CHECK_THROWS_AS(obj.bound(), ContractError);
}

TEST_CASE("latent names must not collide with observations") {
  Tensor z = filled({2}, {1.0, 2.0});
  Tensor lq = filled({2}, {-0.5, -1.5});
  Observed obs{{"z", Tensor(0.0)}};
  CHECK_THROWS_AS(var::elbo(quadratic_joint(), obs, fixed_bundle(z, lq, 0)), ContractError);

  var::LatentBundle empty;
  CHECK_THROWS_AS(var::elbo(quadratic_joint(), {}, empty), ContractError);
}

TEST_CASE("sgvb cost differentiates through the samples") {
  Tape tape;
  Tensor mu = tape.leaf(Tensor(0.4));
  // one-draw pathwise estimate with eps fixed at 0.3, q = N(mu, 1)
  Tensor eps(0.3);
  Tensor z = mu + eps;
  Tensor lq = Tensor(-0.5 * 0.3 * 0.3 - 0.5 * std::log(2.0 * 3.14159265358979323846));
  var::LatentBundle b;
  b.add("z", z, lq);
  auto obj = var::elbo(quadratic_joint(), {}, b);
  Tensor cost = var::sgvb_cost(obj);
  auto grads = gradients(cost, std::vector<Tensor>{mu});
  // d/dmu of -(-(mu+eps)^2 - const) = 2(mu+eps)
  CHECK(grads[0].item() == doctest::Approx(2.0 * 0.7).epsilon(1e-10));

  SUBCASE("constant samples are rejected") {
    var::LatentBundle frozen;
    frozen.add("z", Tensor(0.7), lq);
    auto bad = var::elbo(quadratic_joint(), {}, frozen);
    CHECK_THROWS_AS(var::sgvb_cost(bad), ContractError);
  }
}

TEST_CASE("baseline update seeds then decays") {
  var::BaselineState b;
  b.update(2.0);
  CHECK(b.value == 2.0);
  b.update(1.0);
  CHECK(b.value == doctest::Approx(0.99 * 2.0 + 0.01 * 1.0));
}

TEST_CASE("reinforce cost reproduces the score-function gradient") {
  // q = Bernoulli(phi), model picks log joint a0/a1 by the outcome. The
  // exact ELBO gradient is sigmoid'(phi) * (a1 - a0 - phi).
  oracles::BernoulliModel m{-1.2, -0.4};
  const double phi = 0.3;

  LogJointFn joint = [&](const Observed& v) {
    Tensor z = v.at("z");
    return z * Tensor(m.a1) + (Tensor(1.0) - z) * Tensor(m.a0);
  };

  // fix four draws by hand and average the per-draw costs; gradients then
  // match the estimator applied to that empirical draw set
  Tensor draws = filled({4}, {1.0, 0.0, 1.0, 1.0});
  Tape tape;
  Tensor logit = tape.leaf(Tensor(phi));
  Tensor lq = draws * log(sigmoid(logit)) + (Tensor(1.0) - draws) * log(sigmoid(neg(logit)));
  var::LatentBundle b;
  b.sample_axis = 0;
  b.add("z", draws, lq);
  auto obj = var::elbo(joint, {}, b);
  var::BaselineState baseline;
  Tensor cost = var::reinforce_cost(obj, baseline);
  auto grads = gradients(cost, std::vector<Tensor>{logit});

  // the same estimate by hand with zero baseline on the first call: the
  // surrogate is (l - b) * lq + (lj - lq), so each draw contributes
  // -(l - b - 1) * dlq/dphi (the trailing -dlq has zero mean over draws)
  double hand = 0.0;
  for (double zi : {1.0, 0.0, 1.0, 1.0}) {
    double lj = zi == 1.0 ? m.a1 : m.a0;
    double lqi = oracles::bernoulli_logpmf(zi, phi);
    double dlq = zi - oracles::sigmoid(phi);
    hand += -((lj - lqi) - 1.0) * dlq;
  }
  hand /= 4.0;
  CHECK(grads[0].item() == doctest::Approx(hand).epsilon(1e-10));
  CHECK(baseline.initialized);

  SUBCASE("baseline folds in the batch mean signal") {
    double mean_signal = 0.0;
    for (double zi : {1.0, 0.0, 1.0, 1.0}) {
      mean_signal += (zi == 1.0 ? m.a1 : m.a0) - oracles::bernoulli_logpmf(zi, phi);
    }
    CHECK(baseline.value == doctest::Approx(mean_signal / 4.0));
  }
}

TEST_CASE("vimco cost uses leave-one-out control variates") {
  LogJointFn joint = quadratic_joint();
  Tensor z = filled({2}, {1.0, 2.0});
  Tensor lq = filled({2}, {-0.5, -1.5});

  SUBCASE("wrong objective kind and too few samples are rejected") {
    CHECK_THROWS_AS(var::vimco_cost(var::elbo(joint, {}, fixed_bundle(z, lq, 0))),
                    ContractError);
    auto one = var::iw_objective(joint, {}, fixed_bundle(filled({1}, {0.4}),
                                                         filled({1}, {-1.0}), 0));
    CHECK_THROWS_AS(var::vimco_cost(one), ContractError);
  }

  SUBCASE("recorded cost matches the hand-built surrogate") {
    // two samples: the learning signal for draw i is the bound minus the
    // bound with lw_i replaced by the mean of the other log weights
    auto obj = var::iw_objective(joint, {}, fixed_bundle(z, lq, 0));
    Tensor cost = var::vimco_cost(obj);
    CHECK(cost.size() == 1);

    double lw0 = -0.5, lw1 = -2.5;  // lj = {-1, -4} minus lq
    double bound = oracles::logaddexp(lw0, lw1) - std::log(2.0);
    double without0 = oracles::logaddexp(lw1, lw1) - std::log(2.0);
    double without1 = oracles::logaddexp(lw0, lw0) - std::log(2.0);
    double s0 = bound - without0;
    double s1 = bound - without1;
    // cost = -(sum_i s_i lq_i + bound); the normalized-weight term of the
    // estimator enters through the gradient of the bound, not the value
    double want = -(s0 * lq[0] + s1 * lq[1] + bound);
    CHECK(cost.item() == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("rws proposal cost weights log q by the normalized weights") {
  Tensor z = filled({2}, {1.0, 2.0});
  Tape tape;
  Tensor theta = tape.leaf(Tensor(1.0));
  Tensor lq = theta * filled({2}, {-0.5, -1.5});
  var::LatentBundle b;
  b.sample_axis = 0;
  b.add("z", z, lq);

  Tensor cost = var::klpq_rws_cost(quadratic_joint(), {}, b);
  double lw0 = -0.5, lw1 = -2.5;
  double norm = oracles::logaddexp(lw0, lw1);
  double w0 = std::exp(lw0 - norm), w1 = std::exp(lw1 - norm);
  CHECK(cost.item() == doctest::Approx(-(w0 * -0.5 + w1 * -1.5)).epsilon(1e-10));

  // the weights are treated as constants: gradient is -sum w_i dlq_i/dtheta
  auto grads = gradients(cost, std::vector<Tensor>{theta});
  CHECK(grads[0].item() == doctest::Approx(-(w0 * -0.5 + w1 * -1.5)).epsilon(1e-10));

  SUBCASE("equal weights at equal log weights") {
    Tensor lq2 = filled({2}, {-1.0, -1.0});
    var::LatentBundle b2;
    b2.sample_axis = 0;
    b2.add("z", filled({2}, {0.5, -0.5}), lq2);
    LogJointFn flat = [](const Observed& v) {
      return v.at("z") * Tensor(0.0) + Tensor(-2.0);
    };
    Tensor c2 = var::rws_cost(var::klpq(flat, {}, b2));
    CHECK(c2.item() == doctest::Approx(1.0).epsilon(1e-10));  // -(0.5*-1 + 0.5*-1)
  }
}

TEST_CASE("from_net lifts samples and log probs") {
  RngState rng(31);
  BayesianNet net;
  Tensor z = net.add_node("z", DistributionSpec::normal(Tensor(0.0), Tensor(0.0)), rng, 3);
  auto b = var::LatentBundle::from_net(net, std::vector<std::string>{"z"}, 0);
  REQUIRE(b.entries.size() == 1);
  CHECK(b.entries[0].name == "z");
  CHECK(b.entries[0].sample.shape() == Shape{3});
  for (int i = 0; i < 3; ++i) {
    CHECK(b.entries[0].sample[i] == z[i]);
    CHECK(b.entries[0].log_prob[i] ==
          doctest::Approx(oracles::normal_logpdf(z[i], 0.0, 1.0)));
  }
}
