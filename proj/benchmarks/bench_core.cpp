#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "abacus/distributions.hpp"
#include "abacus/monte_carlo.hpp"
#include "abacus/random.hpp"
#include "abacus/tensor.hpp"
#include "abacus/variational.hpp"

using namespace abacus;

namespace {

Tensor random_tensor(Shape shape, RngState& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

void bm_matmul(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  RngState rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(16)->Arg(64)->Arg(128);

void bm_logsumexp(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  RngState rng(2);
  Tensor a = random_tensor({n, 64}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(logsumexp(a, {0}));
  }
  state.SetItemsProcessed(state.iterations() * n * 64);
}
BENCHMARK(bm_logsumexp)->Arg(64)->Arg(1024);

void bm_tape_backward(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  RngState rng(3);
  Tensor w0 = random_tensor({n, n}, rng);
  Tensor x = random_tensor({64, n}, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor w = tape.leaf(w0);
    Tensor h = tanh(matmul(x, w));
    Tensor cost = reduce_mean(square(h));
    auto grads = gradients(cost, std::vector<Tensor>{w});
    benchmark::DoNotOptimize(grads[0]);
  }
}
BENCHMARK(bm_tape_backward)->Arg(16)->Arg(64);

void bm_elbo_step(benchmark::State& state) {
  // one pathwise gradient step on a mean-field gaussian fit to a quadratic
  RngState rng(4);
  const std::size_t d = 32;
  Parameter mean(Tensor::zeros({d}), "mean");
  Parameter logstd(Tensor::zeros({d}), "logstd");
  LogJointFn joint = [](const Observed& v) {
    return Tensor(-0.5) * reduce_sum(square(v.at("z")), {-1});
  };
  std::vector<Parameter*> params{&mean, &logstd};
  for (auto _ : state) {
    Tape tape;
    auto q = DistributionSpec::normal(mean.use(tape), logstd.use(tape), 1);
    Tensor z = q.rsample(rng, 8);
    variational::LatentBundle latent;
    latent.sample_axis = 0;
    latent.add("z", z, q.log_prob(z));
    auto obj = variational::elbo(joint, {}, latent);
    Tensor cost = variational::sgvb_cost(obj);
    auto grads = gradients(cost, params);
    adam_step(params, grads, AdamConfig{});
    benchmark::DoNotOptimize(cost.item());
  }
}
BENCHMARK(bm_elbo_step);

void bm_hmc_transition(benchmark::State& state) {
  const std::size_t d = 16;
  LogJointFn target = [](const Observed& v) {
    return Tensor(-0.5) * reduce_sum(square(v.at("z")), {-1});
  };
  mc::HmcConfig cfg;
  cfg.n_chains = 4;
  cfg.n_leapfrogs = 10;
  auto st = mc::hmc_init(mc::Positions{{"z", Tensor::zeros({4, d})}}, cfg);
  RngState rng(5);
  auto rngs = rng.split(4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mc::hmc_transition(st, target, {}, rngs));
  }
}
BENCHMARK(bm_hmc_transition);

}  // namespace

BENCHMARK_MAIN();
