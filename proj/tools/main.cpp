#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace vamzls;
  cli::RunConfig cfg;
  std::string format = "table";
  int knots = 0;
  long long seed = -1;
  double alpha = 0.0;
  int reps = 0;

  CLI::App app{"Variational additive models with global tests of smooth and functional terms"};
  app.require_subcommand(1);

  auto add_fit_flags = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data_path, "Delimited data file with a header row")->required();
    sub->add_option("--model", cfg.model_path, "JSON model file")->required();
    sub->add_option("--knots", knots, "Override the basis size of every smooth and functional term");
    sub->add_option("--tol", cfg.control.tol, "Absolute ELBO change that ends the iteration");
    sub->add_option("--max-iter", cfg.control.max_iter, "Iteration cap");
    sub->add_option("--out", cfg.out_path, "Output file");
    sub->add_flag("--standardize", cfg.standardize, "Scale scalar covariates to mean 0, sd 1 before fitting");
  };

  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write the fit artifact");
  add_fit_flags(fit_cmd);

  auto* test_cmd = app.add_subcommand("test", "Fit a model and test smooth or functional terms");
  add_fit_flags(test_cmd);
  test_cmd->add_option("--term", cfg.terms, "Term to test (repeatable; default all)");
  test_cmd->add_option("--format", format, "table or jsonl");

  auto* sim_cmd = app.add_subcommand("simulate", "Run Monte-Carlo scenarios");
  sim_cmd->add_option("--scenarios", cfg.scenarios_path, "Scenario list (delimited, header row)")->required();
  sim_cmd->add_option("--seed", seed, "Seed for scenarios that do not set one");
  sim_cmd->add_option("--alpha", alpha, "Test level for scenarios that do not set one");
  sim_cmd->add_option("--reps", reps, "Replications for scenarios that do not set them");
  sim_cmd->add_option("--knots", knots, "Basis size for scenarios that do not set one");
  sim_cmd->add_option("--tol", cfg.control.tol, "Absolute ELBO change that ends the iteration");
  sim_cmd->add_option("--max-iter", cfg.control.max_iter, "Iteration cap");
  sim_cmd->add_option("--threads", cfg.threads, "Worker threads (default VAMZLS_THREADS or all cores)");
  sim_cmd->add_option("--out", cfg.out_path, "Output file");
  sim_cmd->add_option("--format", format, "table or jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::exit_user;
  }

  try {
    cfg.format = parse_format(format);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_user;
  }
  if (knots > 0) cfg.knots = knots;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (alpha > 0.0) cfg.alpha = alpha;
  if (reps > 0) cfg.reps = reps;

  if (fit_cmd->parsed()) return cli::cmd_fit(cfg);
  if (test_cmd->parsed()) return cli::cmd_test(cfg);
  return cli::cmd_simulate(cfg);
}
