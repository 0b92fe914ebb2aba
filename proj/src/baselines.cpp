#include "bqrnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "bqrnn/samplers.hpp"

namespace bqrnn {

namespace {

Matrix with_intercept(const Matrix& x) {
  Matrix x1(x.rows(), x.cols() + 1);
  x1.col(0).setOnes();
  x1.rightCols(x.cols()) = x;
  return x1;
}

double total_check_loss(const Vector& r, const QuantileSpec& spec) {
  double total = 0.0;
  for (Index i = 0; i < r.size(); ++i) total += check_loss(r(i), spec);
  return total;
}

}  // namespace

QrFit fit_linear_qr(const Dataset& data, const QuantileSpec& spec,
                    const QrOptions& opts) {
  const Index n = data.n();
  const Index m = data.p() + 1;
  if (n <= m) {
    throw std::invalid_argument(
        "fit_linear_qr: need more observations than coefficients");
  }
  const Matrix x1 = with_intercept(data.x);
  Eigen::ColPivHouseholderQR<Matrix> qr(x1);
  if (qr.rank() < m) {
    throw std::runtime_error(
        "fit_linear_qr: design matrix is rank deficient (rank " +
        std::to_string(qr.rank()) + " of " + std::to_string(m) + ")");
  }
  Vector coef = qr.solve(data.y);
  Index total_iter = 0;
  for (double eps = opts.eps_start; eps >= opts.eps_end * 0.999; eps *= 0.1) {
    for (Index it = 0; it < opts.max_iter_per_stage; ++it) {
      ++total_iter;
      const Vector r = data.y - x1 * coef;
      Vector w(n);
      for (Index i = 0; i < n; ++i) {
        const double a = r(i) < 0.0 ? 1.0 - spec.tau : spec.tau;
        w(i) = a / std::max(std::abs(r(i)), eps);
      }
      const Matrix xw = x1.array().colwise() * w.array();
      const Matrix a = x1.transpose() * xw;
      const Vector b = xw.transpose() * data.y;
      const Vector next = a.ldlt().solve(b);
      const double step = (next - coef).norm();
      coef = next;
      if (step <= opts.tol * (1.0 + coef.norm())) break;
    }
  }
  return {coef, total_check_loss(data.y - x1 * coef, spec), total_iter};
}

ChainOutput fit_bqr(const Dataset& data, const Priors& priors,
                    const QuantileSpec& spec, const ChainConfig& config,
                    std::uint64_t stream_id) {
  const Matrix design = with_intercept(data.x);
  const Vector beta_init = Vector::Zero(design.cols());
  return run_linear_gibbs(design, data, priors, spec, config, beta_init,
                          stream_id);
}

double smoothed_check_loss(double u, double tau, double eps) {
  if (!(eps > 0.0)) {
    throw std::domain_error("smoothed_check_loss: eps must be positive");
  }
  if (u > eps) return u * tau;
  if (u < -eps) return u * (tau - 1.0);
  return u * u / (4.0 * eps) + (tau - 0.5) * u + eps / 4.0;
}

double smoothed_check_deriv(double u, double tau, double eps) {
  if (!(eps > 0.0)) {
    throw std::domain_error("smoothed_check_deriv: eps must be positive");
  }
  if (u > eps) return tau;
  if (u < -eps) return tau - 1.0;
  return u / (2.0 * eps) + (tau - 0.5);
}

double qrnn_loss_gradient(const NetworkParams& params, const Matrix& x,
                          const Vector& y, const QuantileSpec& spec,
                          double eps, Vector* grad) {
  const Index n = x.rows();
  const Index k = params.gamma.rows();
  const Index p = x.cols();
  if (y.size() != n) {
    throw std::invalid_argument("qrnn_loss_gradient: y length mismatch");
  }
  const Matrix h = design_matrix(x, params.gamma);
  const Vector f = h * params.beta;
  double loss = 0.0;
  Vector dpsi(n);
  for (Index i = 0; i < n; ++i) {
    const double u = y(i) - f(i);
    loss += smoothed_check_loss(u, spec.tau, eps);
    if (grad != nullptr) dpsi(i) = smoothed_check_deriv(u, spec.tau, eps);
  }
  loss /= static_cast<double>(n);
  if (grad != nullptr) {
    // dLoss/df_i = -rho'(u_i)/n
    const Vector coeff = -dpsi / static_cast<double>(n);
    grad->resize((k + 1) + k * (p + 1));
    grad->head(k + 1) = h.transpose() * coeff;
    for (Index j = 0; j < k; ++j) {
      const auto a = h.col(j + 1).array();
      const Vector s =
          (coeff.array() * a * (1.0 - a)).matrix() * params.beta(j + 1);
      const Index base = (k + 1) + j * (p + 1);
      (*grad)(base) = s.sum();
      grad->segment(base + 1, p) = x.transpose() * s;
    }
  }
  return loss;
}

QrnnFit fit_qrnn(const Dataset& data, const QuantileSpec& spec, Index k,
                 const QrnnOptions& opts) {
  if (k < 1) throw std::invalid_argument("fit_qrnn: k must be >= 1");
  if (opts.epochs < 1 || opts.restarts < 1) {
    throw std::invalid_argument("fit_qrnn: epochs and restarts must be >= 1");
  }
  const Index n = data.n();
  const Index p = data.p();
  if (n < 2) throw std::invalid_argument("fit_qrnn: need at least 2 rows");

  double eps = opts.smoothing_eps;
  if (eps <= 0.0) {
    const double sd =
        std::sqrt((data.y.array() - data.y.mean()).square().sum() /
                  static_cast<double>(n - 1));
    eps = sd > 0.0 ? 1e-3 * sd : 1e-3;
  }

  // Empirical tau-quantile of y, the natural output intercept start.
  std::vector<double> ys(data.y.data(), data.y.data() + n);
  std::sort(ys.begin(), ys.end());
  const auto qi = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(n - 1),
                       std::floor(spec.tau * static_cast<double>(n))));
  const double y_tau = ys[qi];

  QrnnFit best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (Index rep = 0; rep < opts.restarts; ++rep) {
    RngStream rng(opts.seed, static_cast<std::uint64_t>(rep));
    NetworkParams params;
    params.beta.resize(k + 1);
    params.beta(0) = y_tau;
    for (Index j = 1; j <= k; ++j) params.beta(j) = 0.1 * standard_normal(rng);
    params.gamma.resize(k, p + 1);
    const double gsd = 1.0 / std::sqrt(static_cast<double>(p + 1));
    for (Index j = 0; j < k; ++j) {
      for (Index h = 0; h <= p; ++h) {
        params.gamma(j, h) = gsd * standard_normal(rng);
      }
    }

    Vector theta = flatten(params);
    Vector grad;
    double loss = qrnn_loss_gradient(params, data.x, data.y, spec, eps, &grad);
    if (!std::isfinite(loss)) {
      throw std::runtime_error(
          "fit_qrnn: training diverged (non-finite loss); rescale the data or "
          "lower the learning rate");
    }
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(opts.epochs));
    double step = 1.0;
    for (Index epoch = 0; epoch < opts.epochs; ++epoch) {
      const double g2 = grad.squaredNorm();
      if (g2 == 0.0) break;
      step = std::min(step * 2.0, 1e6);
      double trial_loss = std::numeric_limits<double>::infinity();
      Vector trial;
      NetworkParams trial_params;
      while (step > 1e-18) {
        trial = theta - step * grad;
        trial_params = unflatten(trial, k, p);
        trial_loss =
            qrnn_loss_gradient(trial_params, data.x, data.y, spec, eps, nullptr);
        if (std::isfinite(trial_loss) && trial_loss <= loss - 1e-4 * step * g2) {
          break;
        }
        step *= 0.5;
      }
      if (step <= 1e-18) break;
      theta = trial;
      params = trial_params;
      const double prev = loss;
      loss = qrnn_loss_gradient(params, data.x, data.y, spec, eps, &grad);
      if (!std::isfinite(loss)) {
        throw std::runtime_error(
            "fit_qrnn: training diverged (non-finite loss); rescale the data "
            "or lower the learning rate");
      }
      trace.push_back(loss);
      if (prev - loss <= opts.rel_tol * std::max(1.0, std::abs(prev))) break;
    }
    if (loss < best_loss) {
      best_loss = loss;
      best.params = params;
      best.train_loss_trace = std::move(trace);
      best.smoothing_eps = eps;
    }
  }
  return best;
}

}  // namespace bqrnn
