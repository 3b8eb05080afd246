#include "experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "abacus/bayesnet.hpp"
#include "abacus/errors.hpp"
#include "abacus/monte_carlo.hpp"
#include "abacus/variational.hpp"

namespace abacus::cli {

namespace var = abacus::variational;

bool parse_example(const std::string& name, Example& out) {
  if (name == "blr") out = Example::Blr;
  else if (name == "vae") out = Example::Vae;
  else if (name == "dsbn") out = Example::Dsbn;
  else return false;
  return true;
}

bool parse_method(const std::string& name, Method& out) {
  if (name == "sgvb") out = Method::Sgvb;
  else if (name == "reinforce") out = Method::Reinforce;
  else if (name == "iwae") out = Method::Iwae;
  else if (name == "vimco") out = Method::Vimco;
  else if (name == "rws") out = Method::Rws;
  else if (name == "hmc") out = Method::Hmc;
  else if (name == "is-eval") out = Method::IsEval;
  else return false;
  return true;
}

bool method_valid(Example example, Method method) {
  switch (example) {
    case Example::Blr:
      return method == Method::Sgvb || method == Method::Iwae || method == Method::Hmc ||
             method == Method::IsEval;
    case Example::Vae:
      return method == Method::Sgvb || method == Method::Iwae || method == Method::IsEval;
    case Example::Dsbn:
      return method != Method::Hmc;
  }
  return false;
}

namespace {

Tensor transpose2(const Tensor& a) {
  std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor t = Tensor::zeros({cols, rows});
  auto src = a.data();
  auto dst = t.mutable_data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
  }
  return t;
}

Tensor init_weight(std::size_t in, std::size_t out, RngState& rng) {
  Tensor w = Tensor::zeros({in, out});
  double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : w.mutable_data()) v = s * rng.normal();
  return w;
}

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

Tensor slice_rows(const Tensor& x, std::size_t lo, std::size_t hi) {
  std::size_t cols = x.shape()[1];
  Tensor out = Tensor::zeros({hi - lo, cols});
  auto src = x.data();
  auto dst = out.mutable_data();
  std::copy(src.begin() + lo * cols, src.begin() + hi * cols, dst.begin());
  return out;
}

LogJointFn joint_of(ModelBuilder builder, std::vector<std::string> names) {
  return [builder = std::move(builder), names = std::move(names)](const Observed& merged) {
    return log_joint(builder, merged, names);
  };
}

class Reporter {
 public:
  Reporter(MetricSink& sink, std::int64_t every) : sink_(sink), every_(every) {}

  bool due(std::int64_t it) const { return it % every_ == 0; }

  void record(std::int64_t it, std::map<std::string, double> values) {
    MetricRecord rec;
    rec.iter = it;
    rec.values = std::move(values);
    sink_.write(rec);
  }

  // Marks the step where optimization lost numeric footing, then flushes.
  int fail_non_finite(std::int64_t it) {
    MetricRecord rec;
    rec.iter = it;
    sink_.write(rec);
    sink_.flush();
    std::cerr << "cost became non-finite at iteration " << it << "\n";
    return 3;
  }

 private:
  MetricSink& sink_;
  std::int64_t every_;
};

constexpr std::size_t kEvalChunkBudget = 4'000'000;  // doubles held per eval chunk

std::size_t eval_chunk_rows(std::size_t k, std::size_t per_row) {
  std::size_t per = std::max<std::size_t>(1, k * per_row);
  return std::max<std::size_t>(1, kEvalChunkBudget / per);
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression: w ~ N(0, I); y_i ~ Bernoulli(x_i . w).
// ---------------------------------------------------------------------------

struct BlrSetup {
  Tensor x, y, true_w;  // x [n, dim]
  Tensor xt;            // [dim, n], so logits = w . x^T keeps a leading axis
  std::size_t n = 0, dim = 0;
};

BlrSetup make_blr_setup(const ExperimentConfig& cfg, RngState& data_rng) {
  BlrData d = cfg.data == "synthetic" ? synth_blr_data(cfg.n_data, cfg.dim, data_rng)
                                      : load_blr_csv(cfg.data);
  BlrSetup s;
  s.n = d.x.shape()[0];
  s.dim = d.x.shape()[1];
  s.xt = transpose2(d.x);
  s.x = std::move(d.x);
  s.y = std::move(d.y);
  s.true_w = std::move(d.true_w);
  return s;
}

// w always carries a leading samples-or-chains axis, so logits are [k, n].
ModelBuilder blr_model(const BlrSetup& s, RngState& rng, std::size_t k) {
  Tensor zero = Tensor::zeros({s.dim});
  return [&s, &rng, k, zero](const Observed& obs) {
    BayesianNet net(obs);
    Tensor w = net.add_node("w", DistributionSpec::normal(zero, zero, 1), rng, k);
    Tensor logits = matmul(w, s.xt);
    net.add_node("y", DistributionSpec::bernoulli(logits, 1), rng);
    return net;
  };
}

double blr_accuracy(const BlrSetup& s, std::span<const double> w) {
  auto xd = s.x.data();
  auto yd = s.y.data();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    double logit = 0.0;
    for (std::size_t d = 0; d < s.dim; ++d) logit += xd[i * s.dim + d] * w[d];
    double pred = logit >= 0.0 ? 1.0 : 0.0;
    if (pred == yd[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(s.n);
}

int run_blr_hmc(const ExperimentConfig& cfg, const BlrSetup& s, RngState& rng, Reporter& rep) {
  std::size_t chains = cfg.n_chains;
  ModelBuilder model = blr_model(s, rng, chains);
  mc::HmcConfig hc;
  hc.n_chains = chains;
  hc.warmup_iters = cfg.warmup;
  mc::Positions init{{"w", Tensor::zeros({chains, s.dim})}};
  std::size_t draws = static_cast<std::size_t>(cfg.iters);
  auto res = mc::hmc_sample(hc, model, Observed{{"y", s.y}}, init, draws, rng);

  double warm_acc = 0.0;
  for (const auto& info : res.warmup_infos) warm_acc += info.mean_acceptance;
  if (!res.warmup_infos.empty()) warm_acc /= static_cast<double>(res.warmup_infos.size());
  rep.record(0, {{"acceptance_rate", warm_acc}, {"step_size", res.final_state.step_size}});

  const auto& dw = res.draws.at("w");
  std::vector<double> wsum(s.dim, 0.0);
  double acc_sum = 0.0;
  for (std::int64_t it = 1; it <= static_cast<std::int64_t>(draws); ++it) {
    auto td = dw[it - 1].data();
    for (std::size_t c = 0; c < chains; ++c) {
      for (std::size_t d = 0; d < s.dim; ++d) wsum[d] += td[c * s.dim + d];
    }
    acc_sum += res.infos[it - 1].mean_acceptance;
    if (rep.due(it)) {
      std::vector<double> wmean(s.dim);
      double count = static_cast<double>(it) * static_cast<double>(chains);
      for (std::size_t d = 0; d < s.dim; ++d) wmean[d] = wsum[d] / count;
      rep.record(it, {{"acceptance_rate", acc_sum / static_cast<double>(it)},
                      {"step_size", res.final_state.step_size},
                      {"accuracy", blr_accuracy(s, wmean)}});
    }
  }
  return 0;
}

int run_blr(const ExperimentConfig& cfg, MetricSink& sink) {
  RngState master(cfg.seed);
  RngState data_rng = master.split();
  RngState train_rng = master.split();
  BlrSetup s = make_blr_setup(cfg, data_rng);
  Reporter rep(sink, cfg.report_every);

  if (cfg.method == Method::Hmc) return run_blr_hmc(cfg, s, train_rng, rep);

  bool is_eval = cfg.method == Method::IsEval;
  std::size_t k_train = is_eval ? 1 : cfg.n_particles;
  ModelBuilder model = blr_model(s, train_rng, cfg.n_particles);
  LogJointFn lj = joint_of(model, {"w", "y"});
  Observed observed{{"y", s.y}};

  Parameter q_mu(Tensor::zeros({s.dim}), "q_mu");
  Parameter q_logstd(Tensor::zeros({s.dim}), "q_logstd");
  std::vector<Parameter*> params{&q_mu, &q_logstd};
  const char* bound_key = cfg.method == Method::Iwae ? "iw_bound" : "elbo";
  std::int64_t iters = (!is_eval || cfg.posterior_proposal) ? cfg.iters : 0;
  bool train = !is_eval || cfg.posterior_proposal;

  auto build_q = [&](Tape* tape, std::size_t k) {
    Tensor mu = tape ? q_mu.use(*tape) : q_mu.value();
    Tensor ls = tape ? q_logstd.use(*tape) : q_logstd.value();
    BayesianNet qnet;
    qnet.add_node("w", DistributionSpec::normal(mu, ls, 1), train_rng, k);
    std::vector<std::string> names{"w"};
    return var::LatentBundle::from_net(qnet, names, 0);
  };

  if (train) {
    for (std::int64_t it = 0; it <= iters; ++it) {
      Tape tape;
      auto bundle = build_q(&tape, k_train);
      auto obj = cfg.method == Method::Iwae ? var::iw_objective(lj, observed, bundle)
                                            : var::elbo(lj, observed, bundle);
      Tensor cost = reduce_mean(var::sgvb_cost(obj));
      if (!cost.all_finite()) return rep.fail_non_finite(it);
      if (it > 0) {
        auto grads = gradients(cost, params);
        try {
          adam_step(params, grads, AdamConfig{.lr = cfg.learning_rate});
        } catch (const NumericError&) {
          return rep.fail_non_finite(it);
        }
      }
      if (rep.due(it)) {
        rep.record(it, {{bound_key, -cost.item()},
                        {"accuracy", blr_accuracy(s, q_mu.value().data())}});
      }
    }
  }

  if (is_eval) {
    var::LatentBundle bundle;
    if (cfg.posterior_proposal) {
      bundle = build_q(nullptr, cfg.n_particles);
    } else {
      BayesianNet prior_net = model({});
      std::vector<std::string> names{"w"};
      bundle = var::LatentBundle::from_net(prior_net, names, 0);
    }
    Tensor ll = mc::is_loglikelihood(lj, observed, bundle);
    rep.record(iters, {{"log_likelihood_estimate", ll.item()}});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Toy VAE on binary images: z ~ N(0, I); x ~ Bernoulli(dec(z)) with a tanh
// hidden layer; q(z|x) is an amortized diagonal Normal.
// ---------------------------------------------------------------------------

struct VaeParams {
  Parameter dw1, db1, dw2, db2;        // decoder: z -> h -> x logits
  Parameter ew, eb, emw, emb, esw, esb;  // encoder: x -> h -> (mean, logstd)
};

VaeParams make_vae_params(std::size_t nz, std::size_t nh, std::size_t nx, RngState& rng) {
  return VaeParams{
      Parameter(init_weight(nz, nh, rng), "dec_w1"),
      Parameter(Tensor::zeros({nh}), "dec_b1"),
      Parameter(init_weight(nh, nx, rng), "dec_w2"),
      Parameter(Tensor::zeros({nx}), "dec_b2"),
      Parameter(init_weight(nx, nh, rng), "enc_w"),
      Parameter(Tensor::zeros({nh}), "enc_b"),
      Parameter(init_weight(nh, nz, rng), "enc_mean_w"),
      Parameter(Tensor::zeros({nz}), "enc_mean_b"),
      Parameter(init_weight(nh, nz, rng), "enc_logstd_w"),
      Parameter(Tensor::zeros({nz}), "enc_logstd_b"),
  };
}

struct VaeDecoder {
  Tensor w1, b1, w2, b2;
};

VaeDecoder vae_decoder(VaeParams& p, Tape* tape) {
  if (tape) return {p.dw1.use(*tape), p.db1.use(*tape), p.dw2.use(*tape), p.db2.use(*tape)};
  return {p.dw1.value(), p.db1.value(), p.dw2.value(), p.db2.value()};
}

ModelBuilder vae_model(VaeDecoder dec, std::size_t rows, std::size_t nz, RngState& rng,
                       std::size_t k) {
  Tensor zero = Tensor::zeros({rows, nz});
  return [dec, zero, &rng, k](const Observed& obs) {
    BayesianNet net(obs);
    Tensor z = net.add_node("z", DistributionSpec::normal(zero, zero, 1), rng, k);
    Tensor h = tanh(matmul(z, dec.w1) + dec.b1);
    Tensor logits = matmul(h, dec.w2) + dec.b2;
    net.add_node("x", DistributionSpec::bernoulli(logits, 1), rng);
    return net;
  };
}

var::LatentBundle vae_encode(VaeParams& p, Tape* tape, const Tensor& x_rows, RngState& rng,
                             std::size_t k) {
  Tensor ew = tape ? p.ew.use(*tape) : p.ew.value();
  Tensor eb = tape ? p.eb.use(*tape) : p.eb.value();
  Tensor emw = tape ? p.emw.use(*tape) : p.emw.value();
  Tensor emb = tape ? p.emb.use(*tape) : p.emb.value();
  Tensor esw = tape ? p.esw.use(*tape) : p.esw.value();
  Tensor esb = tape ? p.esb.use(*tape) : p.esb.value();
  Tensor h = tanh(matmul(x_rows, ew) + eb);
  Tensor mean = matmul(h, emw) + emb;
  Tensor logstd = matmul(h, esw) + esb;
  BayesianNet qnet;
  qnet.add_node("z", DistributionSpec::normal(mean, logstd, 1), rng, k);
  std::vector<std::string> names{"z"};
  return var::LatentBundle::from_net(qnet, names, 0);
}

double vae_eval_ll(const ExperimentConfig& cfg, VaeParams& p, const Tensor& x, RngState& rng) {
  std::size_t n = x.shape()[0], nx = x.shape()[1];
  std::size_t k = cfg.n_particles;
  std::size_t chunk = eval_chunk_rows(k, nx + 2 * cfg.n_z + 2);
  double total = 0.0;
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    std::size_t hi = std::min(n, lo + chunk);
    Tensor xr = slice_rows(x, lo, hi);
    ModelBuilder model = vae_model(vae_decoder(p, nullptr), hi - lo, cfg.n_z, rng, k);
    LogJointFn lj = joint_of(model, {"z", "x"});
    var::LatentBundle bundle;
    if (cfg.posterior_proposal) {
      bundle = vae_encode(p, nullptr, xr, rng, k);
    } else {
      BayesianNet prior_net = model({});
      std::vector<std::string> names{"z"};
      bundle = var::LatentBundle::from_net(prior_net, names, 0);
    }
    Tensor ll = mc::is_loglikelihood(lj, Observed{{"x", xr}}, bundle);
    for (double v : ll.data()) total += v;
  }
  return total / static_cast<double>(n);
}

int run_vae(const ExperimentConfig& cfg, MetricSink& sink) {
  RngState master(cfg.seed);
  RngState data_rng = master.split();
  RngState init_rng = master.split();
  RngState train_rng = master.split();
  Tensor x = cfg.data == "synthetic" ? synth_binary_images(cfg.n_data, cfg.n_x, data_rng)
                                     : load_image_csv(cfg.data);
  std::size_t n = x.shape()[0], nx = x.shape()[1];
  VaeParams p = make_vae_params(cfg.n_z, cfg.n_h, nx, init_rng);
  std::vector<Parameter*> params{&p.dw1, &p.db1, &p.dw2, &p.db2, &p.ew,
                                 &p.eb,  &p.emw, &p.emb, &p.esw, &p.esb};
  Reporter rep(sink, cfg.report_every);
  Observed observed{{"x", x}};

  bool is_eval = cfg.method == Method::IsEval;
  std::size_t k_train = is_eval ? 1 : cfg.n_particles;
  const char* bound_key = cfg.method == Method::Iwae ? "iw_bound" : "elbo";
  std::int64_t iters = (!is_eval || cfg.posterior_proposal) ? cfg.iters : 0;
  bool train = !is_eval || cfg.posterior_proposal;

  if (train) {
    for (std::int64_t it = 0; it <= iters; ++it) {
      Tape tape;
      ModelBuilder model = vae_model(vae_decoder(p, &tape), n, cfg.n_z, train_rng, k_train);
      LogJointFn lj = joint_of(model, {"z", "x"});
      auto bundle = vae_encode(p, &tape, x, train_rng, k_train);
      auto obj = cfg.method == Method::Iwae ? var::iw_objective(lj, observed, bundle)
                                            : var::elbo(lj, observed, bundle);
      Tensor cost = reduce_mean(var::sgvb_cost(obj));
      if (!cost.all_finite()) return rep.fail_non_finite(it);
      if (it > 0) {
        auto grads = gradients(cost, params);
        try {
          adam_step(params, grads, AdamConfig{.lr = cfg.learning_rate});
        } catch (const NumericError&) {
          return rep.fail_non_finite(it);
        }
      }
      if (rep.due(it)) rep.record(it, {{bound_key, -cost.item()}});
    }
  }

  if (is_eval) {
    double ll = vae_eval_ll(cfg, p, x, train_rng);
    rep.record(iters, {{"log_likelihood_estimate", ll}});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Deep sigmoid belief net, two stochastic layers: z2 ~ Bernoulli(top),
// z1 ~ Bernoulli(W z2 + b), x ~ Bernoulli(W z1 + b). Training can relax the
// latent layers to BinConcrete at a fixed temperature; evaluation always
// switches back to Bernoulli on the same logits.
// ---------------------------------------------------------------------------

struct DsbnParams {
  Parameter top;        // prior logits of the deepest layer
  Parameter pw2, pb2;   // z2 -> z1 logits
  Parameter pw1, pb1;   // z1 -> x logits
  Parameter qw1, qb1;   // x -> z1 logits
  Parameter qw2, qb2;   // z1 -> z2 logits
};

DsbnParams make_dsbn_params(std::size_t nz, std::size_t nx, RngState& rng) {
  return DsbnParams{
      Parameter(Tensor::zeros({nz}), "top_logits"),
      Parameter(init_weight(nz, nz, rng), "gen_w2"),
      Parameter(Tensor::zeros({nz}), "gen_b2"),
      Parameter(init_weight(nz, nx, rng), "gen_w1"),
      Parameter(Tensor::zeros({nx}), "gen_b1"),
      Parameter(init_weight(nx, nz, rng), "inf_w1"),
      Parameter(Tensor::zeros({nz}), "inf_b1"),
      Parameter(init_weight(nz, nz, rng), "inf_w2"),
      Parameter(Tensor::zeros({nz}), "inf_b2"),
  };
}

struct DsbnGen {
  Tensor top, w2, b2, w1, b1;
};
struct DsbnInf {
  Tensor w1, b1, w2, b2;
};

DsbnGen dsbn_gen(DsbnParams& p, Tape* tape) {
  if (tape) {
    return {p.top.use(*tape), p.pw2.use(*tape), p.pb2.use(*tape), p.pw1.use(*tape),
            p.pb1.use(*tape)};
  }
  return {p.top.value(), p.pw2.value(), p.pb2.value(), p.pw1.value(), p.pb1.value()};
}

DsbnInf dsbn_inf(DsbnParams& p, Tape* tape) {
  if (tape) return {p.qw1.use(*tape), p.qb1.use(*tape), p.qw2.use(*tape), p.qb2.use(*tape)};
  return {p.qw1.value(), p.qb1.value(), p.qw2.value(), p.qb2.value()};
}

DistributionSpec binary_dist(bool relaxed, double temp, const Tensor& logits) {
  return relaxed ? DistributionSpec::bin_concrete(Tensor(temp), logits, 1)
                 : DistributionSpec::bernoulli(logits, 1);
}

ModelBuilder dsbn_model(DsbnGen g, std::size_t rows, bool relaxed, double temp, RngState& rng,
                        std::size_t k) {
  Tensor row_zero = Tensor::zeros({rows, 1});
  return [g, row_zero, relaxed, temp, &rng, k](const Observed& obs) {
    BayesianNet net(obs);
    Tensor top = g.top + row_zero;  // [rows, nz], one prior row per example
    Tensor z2 = net.add_node("z2", binary_dist(relaxed, temp, top), rng, k);
    Tensor l1 = matmul(z2, g.w2) + g.b2;
    Tensor z1 = net.add_node("z1", binary_dist(relaxed, temp, l1), rng);
    Tensor lx = matmul(z1, g.w1) + g.b1;
    net.add_node("x", DistributionSpec::bernoulli(lx, 1), rng);
    return net;
  };
}

var::LatentBundle dsbn_encode(DsbnInf q, const Tensor& x_rows, bool relaxed, double temp,
                              RngState& rng, std::size_t k) {
  BayesianNet qnet;
  Tensor l1 = matmul(x_rows, q.w1) + q.b1;
  Tensor z1 = qnet.add_node("z1", binary_dist(relaxed, temp, l1), rng, k);
  Tensor l2 = matmul(z1, q.w2) + q.b2;
  qnet.add_node("z2", binary_dist(relaxed, temp, l2), rng);
  std::vector<std::string> names{"z1", "z2"};
  return var::LatentBundle::from_net(qnet, names, 0);
}

double dsbn_eval_ll(DsbnParams& p, const Tensor& x, bool posterior, std::size_t k, double temp,
                    std::size_t nz, RngState& rng) {
  std::size_t n = x.shape()[0], nx = x.shape()[1];
  std::size_t chunk = eval_chunk_rows(k, nx + 2 * nz + 2);
  double total = 0.0;
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    std::size_t hi = std::min(n, lo + chunk);
    Tensor xr = slice_rows(x, lo, hi);
    ModelBuilder model = dsbn_model(dsbn_gen(p, nullptr), hi - lo, false, temp, rng, k);
    LogJointFn lj = joint_of(model, {"z2", "z1", "x"});
    var::LatentBundle bundle;
    if (posterior) {
      bundle = dsbn_encode(dsbn_inf(p, nullptr), xr, false, temp, rng, k);
    } else {
      BayesianNet prior_net = model({});
      std::vector<std::string> names{"z2", "z1"};
      bundle = var::LatentBundle::from_net(prior_net, names, 0);
    }
    Tensor ll = mc::is_loglikelihood(lj, Observed{{"x", xr}}, bundle);
    for (double v : ll.data()) total += v;
  }
  return total / static_cast<double>(n);
}

int run_dsbn(const ExperimentConfig& cfg, MetricSink& sink) {
  RngState master(cfg.seed);
  RngState data_rng = master.split();
  RngState init_rng = master.split();
  RngState train_rng = master.split();
  RngState eval_rng = master.split();
  Tensor x = cfg.data == "synthetic" ? synth_binary_images(cfg.n_data, cfg.n_x, data_rng)
                                     : load_image_csv(cfg.data);
  std::size_t n = x.shape()[0], nx = x.shape()[1];
  DsbnParams p = make_dsbn_params(cfg.n_z, nx, init_rng);
  std::vector<Parameter*> gen_params{&p.top, &p.pw2, &p.pb2, &p.pw1, &p.pb1};
  std::vector<Parameter*> inf_params{&p.qw1, &p.qb1, &p.qw2, &p.qb2};
  std::vector<Parameter*> all_params = gen_params;
  all_params.insert(all_params.end(), inf_params.begin(), inf_params.end());
  Reporter rep(sink, cfg.report_every);
  Observed observed{{"x", x}};
  var::BaselineState baseline;
  AdamConfig acfg{.lr = cfg.learning_rate};

  bool is_eval = cfg.method == Method::IsEval;
  // pathwise methods (and posterior-proposal pre-training) run on the
  // relaxed latents; the score-function methods stay discrete
  bool relaxed = cfg.method == Method::Sgvb || cfg.method == Method::Iwae || is_eval;
  std::size_t k_train = is_eval ? 1 : cfg.n_particles;
  const char* bound_key =
      (cfg.method == Method::Iwae || cfg.method == Method::Vimco || cfg.method == Method::Rws)
          ? "iw_bound"
          : "elbo";
  std::int64_t iters = (!is_eval || cfg.posterior_proposal) ? cfg.iters : 0;
  bool train = !is_eval || cfg.posterior_proposal;

  if (train) {
    for (std::int64_t it = 0; it <= iters; ++it) {
      Tape tape;
      ModelBuilder model =
          dsbn_model(dsbn_gen(p, &tape), n, relaxed, cfg.temperature, train_rng, k_train);
      LogJointFn lj = joint_of(model, {"z2", "z1", "x"});
      auto bundle = dsbn_encode(dsbn_inf(p, &tape), x, relaxed, cfg.temperature, train_rng,
                                k_train);
      double bound_val = 0.0;
      try {
        if (cfg.method == Method::Rws) {
          auto iw = var::iw_objective(lj, observed, bundle);
          Tensor model_cost = reduce_mean(neg(iw.bound()));
          Tensor prop_cost = reduce_mean(var::klpq_rws_cost(lj, observed, bundle));
          if (!model_cost.all_finite() || !prop_cost.all_finite()) {
            return rep.fail_non_finite(it);
          }
          bound_val = mean_of(iw.bound());
          if (it > 0) {
            auto gm = gradients(model_cost, gen_params);
            auto gp = gradients(prop_cost, inf_params);
            adam_step(gen_params, gm, acfg);
            adam_step(inf_params, gp, acfg);
          }
        } else {
          Tensor cost;
          var::VariationalObjective obj =
              (cfg.method == Method::Iwae || cfg.method == Method::Vimco)
                  ? var::iw_objective(lj, observed, bundle)
                  : var::elbo(lj, observed, bundle);
          switch (cfg.method) {
            case Method::Reinforce:
              cost = reduce_mean(var::reinforce_cost(obj, baseline));
              break;
            case Method::Vimco:
              cost = reduce_mean(var::vimco_cost(obj));
              break;
            default:
              cost = reduce_mean(var::sgvb_cost(obj));
              break;
          }
          if (!cost.all_finite()) return rep.fail_non_finite(it);
          bound_val = mean_of(obj.bound());
          if (it > 0) {
            auto grads = gradients(cost, all_params);
            adam_step(all_params, grads, acfg);
          }
        }
      } catch (const NumericError&) {
        return rep.fail_non_finite(it);
      }
      if (rep.due(it)) {
        std::map<std::string, double> values{{bound_key, bound_val}};
        if (it == iters && !is_eval) {
          // evaluation switches the latents back to Bernoulli on the
          // trained logits
          values["log_likelihood_estimate"] =
              dsbn_eval_ll(p, x, true, 100, cfg.temperature, cfg.n_z, eval_rng);
        }
        rep.record(it, values);
      }
    }
  }

  if (is_eval) {
    double ll = dsbn_eval_ll(p, x, cfg.posterior_proposal, cfg.n_particles, cfg.temperature,
                             cfg.n_z, eval_rng);
    rep.record(iters, {{"log_likelihood_estimate", ll}});
  }
  return 0;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  auto start = std::chrono::steady_clock::now();
  MetricSink sink(cfg.out);
  int code = 0;
  switch (cfg.example) {
    case Example::Blr: code = run_blr(cfg, sink); break;
    case Example::Vae: code = run_vae(cfg, sink); break;
    case Example::Dsbn: code = run_dsbn(cfg, sink); break;
  }
  sink.flush();
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - start)
                .count();
  std::cerr << "finished with code " << code << " in " << ms << " ms\n";
  return code;
}

}  // namespace abacus::cli
