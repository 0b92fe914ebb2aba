#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bqrnn/experiment.hpp"

namespace {

void print_config_errors(const std::vector<bqrnn::ConfigError>& errors) {
  std::cerr << "configuration errors:\n";
  for (const auto& e : errors) {
    std::cerr << "  " << e.field << ": " << e.message << "\n";
  }
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> run_name;
  std::optional<std::vector<double>> tau;
  std::optional<std::vector<std::string>> models;
  std::optional<bqrnn::Index> n_iter;
  std::optional<bqrnn::Index> k;
  std::optional<double> step_sd;
  std::optional<bqrnn::Index> n;
  std::optional<std::string> scenario;
  std::optional<std::string> noise;
  std::optional<double> split_fraction;
  std::optional<bool> standardize;
  std::optional<bqrnn::Index> n_chains;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "master seed override");
  cmd->add_option("--output-dir", ov.output_dir, "output directory override");
  cmd->add_option("--run-name", ov.run_name, "run name override");
  cmd->add_option("--tau", ov.tau, "quantile levels override")->delimiter(',');
  cmd->add_option("--models", ov.models, "model list override")
      ->delimiter(',');
  cmd->add_option("--n-iter", ov.n_iter, "sweeps per chain override");
  cmd->add_option("--k", ov.k, "hidden nodes override");
  cmd->add_option("--step-sd", ov.step_sd, "Metropolis step sd override");
  cmd->add_option("--n", ov.n, "simulated sample size override");
  cmd->add_option("--scenario", ov.scenario, "scenario override");
  cmd->add_option("--noise", ov.noise, "noise family override");
  cmd->add_option("--split-fraction", ov.split_fraction,
                  "train fraction override");
  cmd->add_option("--standardize", ov.standardize,
                  "standardize features/response for network models");
  cmd->add_option("--n-chains", ov.n_chains, "chains per model/tau override");
}

void apply_overrides(const Overrides& ov, bqrnn::ExperimentConfig& cfg) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.output_dir) cfg.output_dir = *ov.output_dir;
  if (ov.run_name) cfg.run_name = *ov.run_name;
  if (ov.tau) cfg.tau = *ov.tau;
  if (ov.models) cfg.models = *ov.models;
  if (ov.n_iter) cfg.n_iter = *ov.n_iter;
  if (ov.k) cfg.k = *ov.k;
  if (ov.step_sd) cfg.mh_step_sd = *ov.step_sd;
  if (ov.n) cfg.n = *ov.n;
  if (ov.scenario) cfg.scenario = *ov.scenario;
  if (ov.noise) cfg.noise = *ov.noise;
  if (ov.split_fraction) cfg.split_fraction = *ov.split_fraction;
  if (ov.standardize) cfg.standardize = *ov.standardize;
  if (ov.n_chains) cfg.n_chains = *ov.n_chains;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Bayesian quantile regression with a feedforward network: simulation "
      "and evaluation driver"};
  app.require_subcommand(1);

  std::string run_config;
  Overrides run_ov;
  CLI::App* run = app.add_subcommand("run", "run an experiment from a config");
  run->add_option("config", run_config, "JSON config path")->required();
  add_override_flags(run, run_ov);

  std::string validate_config_path;
  CLI::App* validate =
      app.add_subcommand("validate", "check a config and echo the defaults");
  validate->add_option("config", validate_config_path, "JSON config path")
      ->required();

  std::string report_dir;
  CLI::App* report =
      app.add_subcommand("report", "print the table for a finished run");
  report->add_option("run_dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      std::vector<bqrnn::ConfigError> errors;
      bqrnn::ExperimentConfig cfg = bqrnn::load_config(run_config, errors);
      apply_overrides(run_ov, cfg);
      if (errors.empty()) {
        const auto more = bqrnn::validate_config(cfg);
        errors.insert(errors.end(), more.begin(), more.end());
      }
      if (!errors.empty()) {
        print_config_errors(errors);
        return 1;
      }
      const bqrnn::ExperimentResult result = bqrnn::run_experiment(cfg);
      std::cout << bqrnn::format_report_table(result.report);
      std::cout << "run directory: " << result.run_dir << "\n";
      return 0;
    }
    if (validate->parsed()) {
      std::vector<bqrnn::ConfigError> errors;
      const bqrnn::ExperimentConfig cfg =
          bqrnn::load_config(validate_config_path, errors);
      if (errors.empty()) {
        const auto more = bqrnn::validate_config(cfg);
        errors.insert(errors.end(), more.begin(), more.end());
      }
      if (!errors.empty()) {
        print_config_errors(errors);
        return 1;
      }
      std::cout << bqrnn::echo_config(cfg);
      return 0;
    }
    const bqrnn::EvalReport rep = bqrnn::read_report(report_dir);
    std::cout << bqrnn::format_report_table(rep);
    return 0;
  } catch (const bqrnn::ConfigValidationError& err) {
    print_config_errors(err.errors());
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
}
