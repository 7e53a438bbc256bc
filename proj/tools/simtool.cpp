// simtool: command-line driver for the simulation experiments.
//
//   simtool <gl|rmf|limit|phi|convergence|stein|mgf> --config FILE --out DIR
//           [--seed N] [--threads N] [--force]
//
// Exit status 0 when every check passes, 1 when one fails, 2 on error.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "rmfgl/error.hpp"
#include "rmfgl/experiments.hpp"

int main(int argc, char** argv) {
  using namespace rmfgl;
  CLI::App app{"RMF Galves-Loecherbach simulation toolkit"};
  app.set_version_flag("--version", RMFGL_VERSION);
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  RunOptions opts;

  const std::map<std::string, std::string> about{
      {"gl", "finite GL network: snapshots, events, intensity identity"},
      {"rmf", "RMF sweep over m_list: snapshots, tallies, means, moment bounds"},
      {"limit", "Picard solve of the limit means and Poisson channel check"},
      {"phi", "Phi contraction curve and fixed-point replay"},
      {"convergence", "Picard solve, RMF sweep, TV / Chen-Stein / TLLN / mean equality"},
      {"stein", "Stein equation solver checks"},
      {"mgf", "stationary MGF equation residual"}};
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", opts.threads, "worker threads, 0 = all cores");
    sub->add_flag("--force", opts.force, "clear a non-empty output directory");
    sub->add_option("--dump-paths", opts.dump_paths, "paths written to snapshots.csv");
    if (name == "convergence") {
      sub->add_option("--t-eval", opts.t_eval, "time of the channel statistics");
    }
    if (name == "limit" || name == "convergence") {
      sub->add_option("--picard-iters", opts.picard_iters, "maximum Picard iterations");
      sub->add_option("--picard-tol", opts.picard_tol, "stop when the sup gap is below max(tol, 2 noise)");
      sub->add_option("--picard-paths", opts.picard_paths, "paths per Picard iteration, 0 = config paths");
    }
    if (name == "phi") {
      sub->add_option("--iterations", opts.phi_iterations, "number of contraction distances");
      sub->add_option("--phi-paths", opts.phi_paths, "0 = min(paths, 10000)");
    }
    if (name == "stein") {
      sub->add_option("--lambdas", opts.stein_lambdas, "grid of lambda values");
      sub->add_option("--cases", opts.stein_cases, "random (lambda, B) cases");
    }
    if (name == "mgf") {
      sub->add_option("--u", opts.mgf_u, "sup norm of u on replica 1");
      sub->add_option("--burn-in", opts.burn_in, "0 = 50 / min r");
      sub->add_option("--window", opts.window, "length of the sampling window");
      sub->add_option("--sample-step", opts.sample_step, "spacing of state samples");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  const auto* parsed = app.get_subcommands().front();
  if (parsed->count("--seed") > 0) opts.seed = seed;
  opts.out = out;

  try {
    const ExperimentConfig cfg = load_config(config);
    const RunResult res = run_experiment(cfg, sub, opts);
    std::cout << res.summary.dump(2) << '\n';
    return res.checks_pass ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "simtool: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "simtool: " << e.what() << '\n';
    return 2;
  }
}
