#pragma once

#include <cstdint>
#include <string>

#include "metrics.hpp"
#include "synth.hpp"

namespace abacus::cli {

enum class Example { Blr, Vae, Dsbn };
enum class Method { Sgvb, Reinforce, Iwae, Vimco, Rws, Hmc, IsEval };

bool parse_example(const std::string& name, Example& out);
bool parse_method(const std::string& name, Method& out);

// hmc targets the continuous-latent regression only; the score-function
// estimators target the discrete-latent example.
bool method_valid(Example example, Method method);

struct ExperimentConfig {
  Example example = Example::Blr;
  Method method = Method::Sgvb;
  std::int64_t iters = 1000;
  double learning_rate = 0.01;
  std::size_t n_particles = 1;
  std::size_t n_chains = 4;
  std::size_t warmup = 500;
  std::uint64_t seed = 42;
  std::string data = "synthetic";  // path to a CSV, or the literal "synthetic"
  std::string out = "-";
  std::size_t dim = 2;
  std::size_t n_z = 8;
  std::size_t n_x = 64;
  std::size_t n_h = 64;
  double temperature = 0.5;
  std::size_t n_data = 500;
  bool posterior_proposal = false;  // is-eval: draw from the fitted posterior
  std::int64_t report_every = 50;
};

// Runs one experiment end to end, streaming metric records to cfg.out.
// Returns the process exit code: 0 on completion, 3 when the cost turns
// non-finite (a bare marker record is flushed first). Sink and dataset
// failures surface as IoError.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace abacus::cli
