#include "bqrnn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bqrnn {

double mean_check(const Vector& y, const Vector& yhat,
                  const QuantileSpec& spec) {
  if (y.size() != yhat.size()) {
    throw std::invalid_argument("mean_check: length mismatch");
  }
  if (y.size() == 0) {
    throw std::invalid_argument("mean_check: empty input");
  }
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    total += check_loss(y(i) - yhat(i), spec);
  }
  return total / static_cast<double>(y.size());
}

OracleError oracle_error(const Vector& mean, const Vector& sd,
                         const Vector& oracle) {
  if (mean.size() != sd.size() || mean.size() != oracle.size()) {
    throw std::invalid_argument("oracle_error: length mismatch");
  }
  if (mean.size() == 0) {
    throw std::invalid_argument("oracle_error: empty input");
  }
  double mae = 0.0;
  Index covered = 0;
  for (Index i = 0; i < mean.size(); ++i) {
    const double err = std::abs(mean(i) - oracle(i));
    mae += err;
    if (err <= 2.0 * sd(i)) ++covered;
  }
  mae /= static_cast<double>(mean.size());
  return {mae, static_cast<double>(covered) / static_cast<double>(mean.size())};
}

namespace {

// Autocovariance at lag k with 1/m normalization of the centered trace.
double autocov(const Vector& c, Index k) {
  const Index m = c.size();
  if (k >= m) return 0.0;
  return c.head(m - k).dot(c.tail(m - k)) / static_cast<double>(m);
}

bool trace_degenerate(const Vector& trace, Vector& centered, double& c0) {
  const double mean = trace.mean();
  centered = trace.array() - mean;
  c0 = centered.squaredNorm() / static_cast<double>(trace.size());
  const double scale = std::max(1.0, mean * mean);
  return !(c0 > 0.0) || !std::isfinite(c0) || c0 < 1e-24 * scale;
}

}  // namespace

EssResult ess(const Vector& trace) {
  const Index m = trace.size();
  if (m < 10) {
    throw std::invalid_argument("ess: need at least 10 samples");
  }
  Vector c;
  double c0 = 0.0;
  if (trace_degenerate(trace, c, c0)) {
    return {static_cast<double>(m), true};
  }
  // Initial positive sequence over paired autocovariances.
  double sum = 0.0;
  const Index max_pairs = std::min<Index>((m - 1) / 2, 5000);
  for (Index pair = 0; pair <= max_pairs; ++pair) {
    const double g = autocov(c, 2 * pair) + autocov(c, 2 * pair + 1);
    if (pair > 0 && g <= 0.0) break;
    sum += g;
  }
  const double tau_int = std::max(2.0 * sum / c0 - 1.0, 1e-12);
  const double value =
      std::min(static_cast<double>(m), static_cast<double>(m) / tau_int);
  return {value, false};
}

AutocorrResult autocorr(const Vector& trace, Index max_lag) {
  const Index m = trace.size();
  if (max_lag < 0 || max_lag >= m) {
    throw std::invalid_argument("autocorr: need 0 <= max_lag < length");
  }
  Vector c;
  double c0 = 0.0;
  AutocorrResult result;
  result.rho.assign(static_cast<std::size_t>(max_lag + 1), 0.0);
  result.degenerate = trace_degenerate(trace, c, c0);
  result.rho[0] = 1.0;
  if (result.degenerate) return result;
  for (Index k = 1; k <= max_lag; ++k) {
    result.rho[static_cast<std::size_t>(k)] = autocov(c, k) / c0;
  }
  return result;
}

double mann_kendall_pvalue(const Vector& trace) {
  const Index n = trace.size();
  if (n < 3) return 1.0;
  double s = 0.0;
  for (Index i = 0; i < n - 1; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = trace(j) - trace(i);
      s += d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
  }
  // tie correction
  std::map<double, Index> counts;
  for (Index i = 0; i < n; ++i) counts[trace(i)] += 1;
  const double nn = static_cast<double>(n);
  double var = nn * (nn - 1.0) * (2.0 * nn + 5.0);
  for (const auto& [value, t] : counts) {
    (void)value;
    if (t > 1) {
      const double tt = static_cast<double>(t);
      var -= tt * (tt - 1.0) * (2.0 * tt + 5.0);
    }
  }
  var /= 18.0;
  if (!(var > 0.0)) return 1.0;
  double z = 0.0;
  if (s > 0.0) z = (s - 1.0) / std::sqrt(var);
  if (s < 0.0) z = (s + 1.0) / std::sqrt(var);
  return std::erfc(std::abs(z) * M_SQRT1_2);
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << "dataset: " << report.dataset_label << "\n\n";
  char buf[160];
  os << "mean check loss\n";
  std::snprintf(buf, sizeof(buf), "%-8s %-6s %-8s %12s %12s\n", "model", "tau",
                "split", "mcf", "oracle_mae");
  os << buf;
  for (const ModelEval& row : report.rows) {
    for (int split = 0; split < 2; ++split) {
      const bool is_train = split == 0;
      const double mcf = is_train ? row.train_mcf : row.test_mcf;
      std::snprintf(buf, sizeof(buf), "%-8s %-6.3f %-8s %12.4f ",
                    row.model.c_str(), row.tau, is_train ? "train" : "test",
                    mcf);
      os << buf;
      if (row.has_oracle) {
        std::snprintf(buf, sizeof(buf), "%12.4f\n",
                      is_train ? row.train_oracle_mae : row.test_oracle_mae);
      } else {
        std::snprintf(buf, sizeof(buf), "%12s\n", "-");
      }
      os << buf;
    }
  }
  bool any_cov = false;
  for (const ModelEval& row : report.rows) any_cov |= row.has_coverage;
  if (any_cov) {
    os << "\noracle coverage of posterior mean +/- 2 sd (test split)\n";
    for (const ModelEval& row : report.rows) {
      if (!row.has_coverage) continue;
      std::snprintf(buf, sizeof(buf), "%-8s %-6.3f %12.4f\n",
                    row.model.c_str(), row.tau, row.test_coverage);
      os << buf;
    }
  }
  bool any_diag = false;
  for (const ModelEval& row : report.rows) any_diag |= row.has_diagnostics;
  if (any_diag) {
    os << "\nchain diagnostics\n";
    std::snprintf(buf, sizeof(buf), "%-8s %-6s %14s %10s  %s\n", "model",
                  "tau", "ess(logpost)", "trend_p", "accept rates");
    os << buf;
    for (const ModelEval& row : report.rows) {
      if (!row.has_diagnostics) continue;
      std::snprintf(buf, sizeof(buf), "%-8s %-6.3f %14.1f %10.4f  ",
                    row.model.c_str(), row.tau, row.ess_log_posterior,
                    row.trend_pvalue);
      os << buf;
      if (row.accept_rates.empty()) {
        os << "-";
      }
      for (std::size_t j = 0; j < row.accept_rates.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%s%.3f", j == 0 ? "" : " ",
                      row.accept_rates[j]);
        os << buf;
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace bqrnn
