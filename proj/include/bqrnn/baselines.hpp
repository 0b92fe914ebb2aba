#pragma once

#include <cstdint>
#include <vector>

#include "bqrnn/ald.hpp"
#include "bqrnn/data.hpp"
#include "bqrnn/mcmc.hpp"
#include "bqrnn/network.hpp"
#include "bqrnn/types.hpp"

namespace bqrnn {

struct QrOptions {
  double eps_start = 1e-2;
  double eps_end = 1e-8;
  Index max_iter_per_stage = 200;
  double tol = 1e-10;
};

struct QrFit {
  Vector coef;       // intercept first
  double objective;  // total check loss at coef
  Index iterations;
};

// Linear quantile regression by iteratively reweighted least squares with a
// shrinking residual floor (continuation from eps_start down to eps_end).
QrFit fit_linear_qr(const Dataset& data, const QuantileSpec& spec,
                    const QrOptions& opts = {});

// Linear Bayesian quantile regression: the Gibbs sampler on the fixed design
// [1 X]. priors.beta_mean must have length p+1; gamma_mean is ignored.
ChainOutput fit_bqr(const Dataset& data, const Priors& priors,
                    const QuantileSpec& spec, const ChainConfig& config,
                    std::uint64_t stream_id = 0);

// Huber-style smoothing of the check loss: quadratic on |u| <= eps, the exact
// linear pieces outside, continuously differentiable at the seams. The gap to
// the exact loss is at most eps * max(tau, 1-tau).
double smoothed_check_loss(double u, double tau, double eps);
double smoothed_check_deriv(double u, double tau, double eps);

struct QrnnOptions {
  Index epochs = 5000;
  Index restarts = 3;
  double rel_tol = 1e-10;
  double smoothing_eps = 0.0;  // 0 picks 1e-3 * sd(y)
  std::uint64_t seed = 0;
};

struct QrnnFit {
  NetworkParams params;
  std::vector<double> train_loss_trace;  // mean smoothed check loss per epoch
  double smoothing_eps;
};

// Mean smoothed check loss of the network on (x, y), and its gradient in the
// flat parameter layout when grad is non-null.
double qrnn_loss_gradient(const NetworkParams& params, const Matrix& x,
                          const Vector& y, const QuantileSpec& spec,
                          double eps, Vector* grad);

// Frequentist quantile regression neural network: full-batch gradient descent
// with backtracking line search on the smoothed check loss, best of several
// random restarts.
QrnnFit fit_qrnn(const Dataset& data, const QuantileSpec& spec, Index k,
                 const QrnnOptions& opts = {});

}  // namespace bqrnn
