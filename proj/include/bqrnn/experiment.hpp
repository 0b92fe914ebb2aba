#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bqrnn/baselines.hpp"
#include "bqrnn/data.hpp"
#include "bqrnn/evaluate.hpp"
#include "bqrnn/mcmc.hpp"

namespace bqrnn {

struct ExperimentConfig {
  std::string mode = "simulate";    // simulate | csv
  std::string scenario = "linear";  // linear | polynomial
  std::string noise = "gaussian";   // gaussian | uniform | exponential
  Index n = 200;
  std::string csv_path;
  std::string csv_target;
  std::string csv_delimiter = ",";
  bool csv_header = true;
  std::vector<double> tau{0.05, 0.25, 0.50, 0.75, 0.95};
  std::vector<std::string> models{"qr", "bqr", "qrnn", "bqrnn"};
  Index k = 4;
  double sigma0_sq = 100.0;
  double sigma1_sq = 100.0;
  double prior_a = 3.0;
  double prior_b = 0.1;
  Index n_iter = 100000;
  double burn_in_fraction = 0.5;
  Index thin = 10;
  double mh_step_sd = 0.01;
  Index n_chains = 1;
  Index qrnn_epochs = 5000;
  Index qrnn_restarts = 3;
  double split_fraction = 0.8;
  bool standardize = true;
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  std::string run_name = "experiment";
};

struct ConfigError {
  std::string field;
  std::string message;
};

std::vector<ConfigError> validate_config(const ExperimentConfig& config);

// Parse a JSON config; unknown keys and type mismatches are reported through
// errors rather than thrown.
ExperimentConfig parse_config_json(const std::string& text,
                                   std::vector<ConfigError>& errors);
ExperimentConfig load_config(const std::string& path,
                             std::vector<ConfigError>& errors);

// Full config echo (defaults filled in) as pretty JSON.
std::string echo_config(const ExperimentConfig& config);

class ConfigValidationError : public std::runtime_error {
 public:
  explicit ConfigValidationError(std::vector<ConfigError> errors);
  const std::vector<ConfigError>& errors() const { return errors_; }

 private:
  std::vector<ConfigError> errors_;
};

struct ExperimentResult {
  EvalReport report;
  std::string run_dir;
};

// End to end driver: build or load the dataset, split, fit every requested
// model at every tau, evaluate, and write manifest/report/fit artifacts into
// a fresh run directory under output_root()/config.output_dir. Reruns with
// the same config produce byte-identical artifact contents.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Resolves BQRNN_OUTPUT_ROOT; "." when unset.
std::string output_root();

// Reconstruct the evaluation table from a run directory's report.json.
EvalReport read_report(const std::string& run_dir);

}  // namespace bqrnn
