#pragma once

#include <string>
#include <vector>

#include "bqrnn/ald.hpp"
#include "bqrnn/types.hpp"

namespace bqrnn {

// Mean check (pinball) loss of predictions against observed responses.
double mean_check(const Vector& y, const Vector& yhat,
                  const QuantileSpec& spec);

struct OracleError {
  double mae;       // mean |mean_i - oracle_i|
  double coverage;  // fraction with |mean_i - oracle_i| <= 2 * sd_i
};
OracleError oracle_error(const Vector& mean, const Vector& sd,
                         const Vector& oracle);

struct EssResult {
  double value;
  bool degenerate;  // trace variance indistinguishable from zero
};

// Effective sample size by the initial-positive-sequence estimator on paired
// autocovariances; capped at the trace length.
EssResult ess(const Vector& trace);

struct AutocorrResult {
  std::vector<double> rho;  // lags 0..max_lag
  bool degenerate;
};
AutocorrResult autocorr(const Vector& trace, Index max_lag);

// Two-sided Mann-Kendall trend test p-value (normal approximation with tie
// correction); small p flags a monotone drift in the trace.
double mann_kendall_pvalue(const Vector& trace);

struct ModelEval {
  std::string model;
  double tau = 0.0;
  double train_mcf = 0.0;
  double test_mcf = 0.0;
  bool has_oracle = false;
  double train_oracle_mae = 0.0;
  double test_oracle_mae = 0.0;
  bool has_coverage = false;
  double test_coverage = 0.0;
  bool has_diagnostics = false;
  std::vector<double> accept_rates;
  double ess_log_posterior = 0.0;
  double trend_pvalue = 1.0;
};

struct EvalReport {
  std::string dataset_label;
  std::vector<ModelEval> rows;
};

std::string format_report_table(const EvalReport& report);

}  // namespace bqrnn
