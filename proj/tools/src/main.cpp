#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "experiments.hpp"

int main(int argc, char** argv) {
  using abacus::cli::Example;
  using abacus::cli::ExperimentConfig;
  using abacus::cli::Method;

  ExperimentConfig cfg;
  if (const char* env = std::getenv("ABACUS_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  std::string method_name = "sgvb";
  std::string proposal = "prior";

  CLI::App app{"Bayesian inference examples over a tape-based tensor core"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--method", method_name, "sgvb|reinforce|iwae|vimco|rws|hmc|is-eval");
    sub->add_option("--iters", cfg.iters, "training iterations, or posterior draws for hmc")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--lr", cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--particles", cfg.n_particles,
                    "samples per gradient estimate, or per is-eval estimate");
    sub->add_option("--chains", cfg.n_chains, "hmc chains")->check(CLI::PositiveNumber);
    sub->add_option("--warmup", cfg.warmup, "hmc warm-up transitions");
    sub->add_option("--seed", cfg.seed, "rng seed; overrides ABACUS_SEED");
    sub->add_option("--data", cfg.data, "CSV path, or 'synthetic'");
    sub->add_option("--out", cfg.out, "metrics path, '-' for stdout");
    sub->add_option("--ndata", cfg.n_data, "synthetic dataset size")
        ->check(CLI::PositiveNumber);
    sub->add_option("--report-every", cfg.report_every, "metric record period in iterations")
        ->check(CLI::PositiveNumber);
    sub->add_option("--proposal", proposal, "is-eval proposal: prior|posterior");
  };

  CLI::App* blr = app.add_subcommand("blr", "Bayesian logistic regression");
  blr->add_option("--dim", cfg.dim, "feature dimension")->check(CLI::PositiveNumber);
  add_common(blr);

  CLI::App* vae = app.add_subcommand("vae", "variational autoencoder on binary images");
  vae->add_option("--nz", cfg.n_z, "latent dimension")->check(CLI::PositiveNumber);
  vae->add_option("--nx", cfg.n_x, "pixels per image")->check(CLI::PositiveNumber);
  vae->add_option("--nh", cfg.n_h, "hidden units")->check(CLI::PositiveNumber);
  add_common(vae);

  CLI::App* dsbn = app.add_subcommand("dsbn", "deep sigmoid belief net");
  dsbn->add_option("--nz", cfg.n_z, "units per stochastic layer")->check(CLI::PositiveNumber);
  dsbn->add_option("--nx", cfg.n_x, "pixels per image")->check(CLI::PositiveNumber);
  dsbn->add_option("--temperature", cfg.temperature, "concrete relaxation temperature")
      ->check(CLI::PositiveNumber);
  add_common(dsbn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* active = blr->parsed() ? blr : vae->parsed() ? vae : dsbn;
  cfg.example = blr->parsed() ? Example::Blr : vae->parsed() ? Example::Vae : Example::Dsbn;

  if (!abacus::cli::parse_method(method_name, cfg.method)) {
    std::cerr << "unknown method '" << method_name << "'\n";
    return 2;
  }
  if (!abacus::cli::method_valid(cfg.example, cfg.method)) {
    std::cerr << "method '" << method_name << "' does not apply to '" << active->get_name()
              << "'\n";
    return 2;
  }
  if (proposal == "posterior") {
    cfg.posterior_proposal = true;
  } else if (proposal != "prior") {
    std::cerr << "--proposal must be 'prior' or 'posterior'\n";
    return 2;
  }

  if (active->count("--particles") == 0) {
    switch (cfg.method) {
      case Method::Iwae:
      case Method::Vimco:
      case Method::Rws:
        cfg.n_particles = 5;
        break;
      case Method::IsEval:
        cfg.n_particles = 1000;
        break;
      default:
        cfg.n_particles = 1;
        break;
    }
  }
  if (cfg.n_particles < 1) {
    std::cerr << "--particles must be >= 1\n";
    return 2;
  }
  if (cfg.method == Method::Vimco && cfg.n_particles < 2) {
    std::cerr << "vimco needs --particles >= 2\n";
    return 2;
  }

  try {
    return abacus::cli::run_experiment(cfg);
  } catch (const abacus::cli::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
