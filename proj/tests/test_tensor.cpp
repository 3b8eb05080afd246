#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "abacus/errors.hpp"
#include "abacus/random.hpp"
#include "abacus/tensor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace abacus;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

using CostBuilder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Backward pass against central finite differences through the same forward
// computation, element by element.
double gradcheck(const std::vector<Tensor>& inputs, const CostBuilder& build) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  Tensor cost = build(tape, leaves);
  REQUIRE(cost.size() == 1);
  auto grads = gradients(cost, leaves);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto eval = [&](double bump) {
        std::vector<Tensor> probe = inputs;
        probe[i].mutable_data()[j] += bump;
        Tape t2;
        std::vector<Tensor> l2;
        for (const auto& t : probe) l2.push_back(t2.leaf(t));
        return build(t2, l2).item();
      };
      double fd = (eval(h) - eval(-h)) / (2.0 * h);
      worst = std::max(worst, rel_err(grads[i].data()[j], fd));
    }
  }
  return worst;
}

Tensor filled(const Shape& shape, std::initializer_list<double> values) {
  return Tensor(shape, std::vector<double>(values));
}

}  // namespace

TEST_CASE("shape helpers broadcast right-aligned") {
  CHECK(broadcast_shape({2, 3}, {3}) == Shape{2, 3});
  CHECK(broadcast_shape({4, 1, 5}, {2, 1}) == Shape{4, 2, 5});
  CHECK(broadcast_shape({}, {3}) == Shape{3});
  CHECK_THROWS_AS(broadcast_shape({2}, {3}), ShapeError);
}

TEST_CASE("tensor construction and access") {
  Tensor t({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.size() == 4);
  CHECK(t[3] == 4.0);
  CHECK_THROWS_AS(Tensor({2}, std::vector<double>{1.0}), ShapeError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK(Tensor(2.5).item() == 2.5);
  CHECK(Tensor::ones({3})[1] == 1.0);
}

TEST_CASE("elementwise forward values") {
  Tensor a = filled({3}, {-1.0, 0.5, 2.0});
  CHECK(exp(a)[2] == doctest::Approx(std::exp(2.0)));
  CHECK(sigmoid(a)[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))));
  CHECK(tanh(a)[1] == doctest::Approx(std::tanh(0.5)));
  CHECK(softplus(a)[0] == doctest::Approx(oracles::softplus(-1.0)));
  CHECK(square(a)[2] == 4.0);
  CHECK(neg(a)[0] == 1.0);
  Tensor b = filled({3}, {2.0, 4.0, 8.0});
  CHECK((a + b)[0] == 1.0);
  CHECK((b - a)[1] == 3.5);
  CHECK((a * b)[1] == 2.0);
  CHECK((b / a)[2] == 4.0);
  CHECK(sqrt(b)[1] == 2.0);
  CHECK(log(b)[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("softplus and sigmoid survive extreme inputs") {
  Tensor big = filled({2}, {750.0, -750.0});
  CHECK(softplus(big)[0] == 750.0);
  CHECK(softplus(big)[1] == 0.0);
  CHECK(sigmoid(big)[0] == 1.0);
  CHECK(sigmoid(big)[1] == 0.0);
  CHECK(big.all_finite());
}

TEST_CASE("domain violations throw") {
  Tensor a = filled({2}, {1.0, -1.0});
  CHECK_THROWS_AS(log(a), DomainError);
  CHECK_THROWS_AS(sqrt(a), DomainError);
}

TEST_CASE("broadcast add and mul") {
  Tensor a = filled({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = filled({3}, {10, 20, 30});
  Tensor c = a + b;
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c[0] == 11.0);
  CHECK(c[5] == 36.0);
  Tensor d = a * Tensor(2.0);
  CHECK(d[4] == 10.0);
}

TEST_CASE("reductions") {
  Tensor a = filled({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(reduce_sum(a).item() == 21.0);
  CHECK(reduce_mean(a, {1}).shape() == Shape{2});
  CHECK(reduce_mean(a, {1})[1] == 5.0);
  CHECK(reduce_sum(a, {0}, true).shape() == Shape{1, 3});
  CHECK(reduce_max(a, {0})[2] == 6.0);
  CHECK_THROWS_AS(reduce_sum(a, {2}), ShapeError);
  CHECK_THROWS_AS(reduce_sum(a, {0, 0}), ShapeError);

  SUBCASE("logsumexp shifts by the max") {
    Tensor big = filled({2}, {1000.0, 1000.0});
    CHECK(logsumexp(big).item() == doctest::Approx(1000.0 + std::log(2.0)));
    double neg_inf = -std::numeric_limits<double>::infinity();
    Tensor withinf = filled({3}, {0.0, neg_inf, 1.0});
    CHECK(logsumexp(withinf).item() ==
          doctest::Approx(oracles::logaddexp(0.0, 1.0)));
    Tensor allinf = filled({2}, {neg_inf, neg_inf});
    CHECK(logsumexp(allinf).item() == neg_inf);
  }
}

TEST_CASE("reshape and broadcast_to") {
  Tensor a = filled({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(a, {3, 2});
  CHECK(r[3] == 4.0);
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
  Tensor b = broadcast_to(filled({1, 3}, {1, 2, 3}), {2, 3});
  CHECK(b[5] == 3.0);
  CHECK_THROWS_AS(broadcast_to(a, {3, 3}), ShapeError);
}

TEST_CASE("matmul values and batching") {
  Tensor a = filled({2, 2}, {1, 2, 3, 4});
  Tensor b = filled({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  CHECK(c[0] == 19.0);
  CHECK(c[3] == 50.0);
  Tensor batch = filled({2, 1, 2}, {1, 2, 3, 4});
  Tensor shared = filled({2, 3}, {1, 0, 1, 0, 1, 1});
  Tensor d = matmul(batch, shared);
  CHECK(d.shape() == Shape{2, 1, 3});
  CHECK(d[0] == 1.0);
  CHECK(d[2] == 3.0);
  CHECK_THROWS_AS(matmul(a, filled({3, 2}, {1, 2, 3, 4, 5, 6})), ShapeError);
  CHECK_THROWS_AS(matmul(a, filled({2}, {1, 2})), ShapeError);
}

TEST_CASE("gather_last picks class entries") {
  Tensor logits = filled({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor idx = filled({2}, {2, 0});
  Tensor picked = gather_last(logits, idx);
  CHECK(picked.shape() == Shape{2});
  CHECK(picked[0] == 3.0);
  CHECK(picked[1] == 4.0);
  CHECK_THROWS_AS(gather_last(logits, filled({2}, {3, 0})), DomainError);
}

TEST_CASE("primitive gradients match finite differences") {
  Tensor a = filled({2, 3}, {0.3, -0.7, 1.2, 0.9, -0.2, 0.5});
  Tensor b = filled({3}, {1.4, 0.6, -0.8});
  Tensor pos = filled({2, 3}, {0.4, 1.9, 0.8, 2.2, 0.6, 1.1});

  CHECK(gradcheck({a, b}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(l[0] + l[1]);
        }) < 1e-6);
  CHECK(gradcheck({a, b}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(l[0] - l[1]);
        }) < 1e-6);
  CHECK(gradcheck({a, b}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(l[0] * l[1]);
        }) < 1e-6);
  CHECK(gradcheck({a, pos}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(l[0] / l[1]);
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(neg(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(exp(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({pos}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(log(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(sigmoid(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(tanh(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(softplus(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(square(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({pos}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(sqrt(l[0]));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(square(reduce_mean(l[0], {1})));
        }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(square(logsumexp(l[0], {0})));
        }) < 1e-6);
  CHECK(gradcheck({filled({4}, {0.1, 0.9, 0.4, -0.6})},
                  [&](Tape&, const std::vector<Tensor>& l) {
                    return reduce_sum(square(reduce_max(l[0], {0}, true)));
                  }) < 1e-6);
  CHECK(gradcheck({a}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(square(reshape(l[0], {3, 2})));
        }) < 1e-6);
  CHECK(gradcheck({b}, [&](Tape&, const std::vector<Tensor>& l) {
          return reduce_sum(square(broadcast_to(l[0], {4, 3})));
        }) < 1e-6);
  CHECK(gradcheck({filled({2, 2}, {0.3, -0.2, 0.8, 1.1}), filled({2, 2}, {0.5, 0.4, -0.9, 0.7})},
                  [&](Tape&, const std::vector<Tensor>& l) {
                    return reduce_sum(square(matmul(l[0], l[1])));
                  }) < 1e-6);
  CHECK(gradcheck({filled({2, 3}, {0.3, -0.2, 0.8, 1.1, 0.5, 0.4})},
                  [&](Tape&, const std::vector<Tensor>& l) {
                    Tensor idx = filled({2}, {1, 2});
                    return reduce_sum(square(gather_last(l[0], idx)));
                  }) < 1e-6);
}

TEST_CASE("max gradient splits ties") {
  Tensor a = filled({3}, {2.0, 2.0, 1.0});
  Tape tape;
  Tensor leaf = tape.leaf(a);
  Tensor cost = reduce_sum(reduce_max(leaf, {0}));
  auto grads = gradients(cost, std::vector<Tensor>{leaf});
  CHECK(grads[0][0] == doctest::Approx(0.5));
  CHECK(grads[0][1] == doctest::Approx(0.5));
  CHECK(grads[0][2] == 0.0);
}

TEST_CASE("stop_gradient blocks the pull") {
  Tape tape;
  Tensor leaf = tape.leaf(filled({2}, {1.0, 2.0}));
  Tensor cost = reduce_sum(leaf * stop_gradient(leaf));
  auto grads = gradients(cost, std::vector<Tensor>{leaf});
  CHECK(grads[0][0] == 1.0);  // only the live factor contributes
  CHECK(grads[0][1] == 2.0);
}

TEST_CASE("gradient bookkeeping errors") {
  Tape t1, t2;
  Tensor a = t1.leaf(filled({2}, {1, 2}));
  Tensor b = t2.leaf(filled({2}, {3, 4}));
  CHECK_THROWS_AS(a + b, ContractError);
  Tensor cost = a + a;  // not scalar
  CHECK_THROWS_AS(gradients(cost, std::vector<Tensor>{a}), ContractError);
  Tensor unreached = t1.leaf(filled({2}, {0, 0}));
  auto grads = gradients(reduce_sum(a), std::vector<Tensor>{unreached});
  CHECK(grads[0][0] == 0.0);
}

TEST_CASE("adam first step moves by about the learning rate") {
  Parameter p(filled({2}, {1.0, -1.0}), "p");
  Tape tape;
  Tensor v = p.use(tape);
  Tensor cost = reduce_sum(v * filled({2}, {3.0, -0.5}));
  std::vector<Parameter*> params{&p};
  auto grads = gradients(cost, params);
  CHECK(grads[0][0] == 3.0);
  adam_step(params, grads, AdamConfig{.lr = 0.1});
  // bias-corrected first step is lr * g / (|g| + eps)
  CHECK(p.value()[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
  CHECK(p.value()[1] == doctest::Approx(-1.0 + 0.1).epsilon(1e-6));
  CHECK(p.step_count() == 1);
}

TEST_CASE("parameter reuse on one tape aliases the node") {
  Parameter p(filled({2}, {0.5, 1.5}), "p");
  Tape tape;
  Tensor v1 = p.use(tape);
  Tensor v2 = p.use(tape);
  Tensor cost = reduce_sum(v1 * v2);  // d/dp (p^2) = 2p
  std::vector<Parameter*> params{&p};
  auto grads = gradients(cost, params);
  CHECK(grads[0][0] == doctest::Approx(1.0));
  CHECK(grads[0][1] == doctest::Approx(3.0));
}

TEST_CASE("adam rejects non-finite gradients") {
  Parameter p(filled({1}, {0.0}), "p");
  std::vector<Parameter*> params{&p};
  std::vector<Tensor> grads{filled({1}, {std::numeric_limits<double>::quiet_NaN()})};
  CHECK_THROWS_AS(adam_step(params, grads, AdamConfig{}), NumericError);
}

TEST_CASE("rng streams are deterministic and decorrelated") {
  RngState a(123), b(123);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  RngState c(123);
  RngState split1 = c.split();
  RngState split2 = c.split();
  CHECK(split1.uniform() != split2.uniform());

  RngState d(7);
  double lo = 1.0, hi = 0.0, sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = d.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    double z = d.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}
