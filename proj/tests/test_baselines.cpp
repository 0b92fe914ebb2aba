#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bqrnn/baselines.hpp"
#include "testutil.hpp"

using bqrnn::Dataset;
using bqrnn::QuantileSpec;
using bqrnn::RngStream;

namespace {

Dataset one_covariate(bqrnn::Index n, std::uint64_t seed) {
  bqrnn::ScenarioSpec spec;
  spec.n = n;
  spec.beta1 = (bqrnn::Vector(1) << 2.0).finished();
  spec.beta2 = (bqrnn::Vector(1) << 0.4).finished();
  RngStream rng(seed, 1);
  return bqrnn::generate_scenario(spec, rng);
}

double total_check(const Dataset& data, const bqrnn::Vector& coef,
                   const QuantileSpec& spec) {
  double total = 0.0;
  for (bqrnn::Index i = 0; i < data.n(); ++i) {
    double fit = coef(0);
    for (bqrnn::Index j = 0; j < data.p(); ++j) fit += coef(j + 1) * data.x(i, j);
    total += bqrnn::check_loss(data.y(i) - fit, spec);
  }
  return total;
}

}  // namespace

TEST_CASE("baselines: intercept-only qr lands on the empirical quantile") {
  Dataset data;
  data.x = bqrnn::Matrix(10, 0);
  data.y = bqrnn::Vector::LinSpaced(10, 1.0, 10.0);
  const QuantileSpec spec(0.3);
  const bqrnn::QrFit fit = bqrnn::fit_linear_qr(data, spec);
  // any value in [3, 4] minimizes; the objective there is the sharp optimum
  double best = 1e300;
  for (double cand = 2.5; cand <= 4.5; cand += 0.001) {
    bqrnn::Vector c(1);
    c << cand;
    best = std::min(best, total_check(data, c, spec));
  }
  CHECK(fit.objective <= best + 1e-6);
  CHECK(fit.coef(0) >= 3.0 - 1e-4);
  CHECK(fit.coef(0) <= 4.0 + 1e-4);
}

TEST_CASE("baselines: qr recovers an exact linear relation at any tau") {
  Dataset data = one_covariate(40, 5);
  data.y = 2.0 + 3.0 * data.x.col(0).array();
  for (double tau : {0.1, 0.5, 0.9}) {
    const bqrnn::QrFit fit = bqrnn::fit_linear_qr(data, QuantileSpec(tau));
    CHECK(fit.coef(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.coef(1) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(fit.objective < 1e-4);
  }
}

TEST_CASE("baselines: qr satisfies first-order optimality under perturbation") {
  const Dataset data = one_covariate(60, 6);
  const QuantileSpec spec(0.7);
  const bqrnn::QrFit fit = bqrnn::fit_linear_qr(data, spec);
  CHECK(fit.objective ==
        doctest::Approx(total_check(data, fit.coef, spec)).epsilon(1e-10));
  RngStream rng(17, 0);
  for (int rep = 0; rep < 200; ++rep) {
    bqrnn::Vector cand = fit.coef;
    for (bqrnn::Index j = 0; j < cand.size(); ++j) {
      cand(j) += 0.02 * (rng.next_unit() - 0.5);
    }
    CHECK(total_check(data, cand, spec) >= fit.objective - 1e-7);
  }
}

TEST_CASE("baselines: qr rejects rank-deficient designs") {
  Dataset data = one_covariate(30, 7);
  bqrnn::Matrix x(30, 2);
  x.col(0) = data.x.col(0);
  x.col(1) = 2.0 * data.x.col(0);  // collinear
  data.x = x;
  data.feature_names = {"x1", "x2"};
  CHECK_THROWS_AS(bqrnn::fit_linear_qr(data, QuantileSpec(0.5)),
                  std::runtime_error);
}

TEST_CASE("baselines: smoothed check loss seams and gap") {
  const double eps = 0.01;
  for (double tau : {0.2, 0.5, 0.85}) {
    // exact outside the smoothing window
    for (double u : {-3.0, -0.5, 0.5, 3.0}) {
      CHECK(bqrnn::smoothed_check_loss(u, tau, eps) ==
            doctest::Approx(bqrnn::check_loss(u, QuantileSpec(tau)))
                .epsilon(1e-14));
      CHECK(bqrnn::smoothed_check_deriv(u, tau, eps) ==
            doctest::Approx(u > 0.0 ? tau : tau - 1.0).epsilon(1e-14));
    }
    // value and slope agree at the seams
    for (double s : {-eps, eps}) {
      CHECK(bqrnn::smoothed_check_loss(s, tau, eps) ==
            doctest::Approx(bqrnn::check_loss(s, QuantileSpec(tau)))
                .epsilon(1e-12));
      const double inner = bqrnn::smoothed_check_deriv(s * (1.0 - 1e-9), tau,
                                                       eps);
      const double outer = bqrnn::smoothed_check_deriv(s * (1.0 + 1e-9), tau,
                                                       eps);
      CHECK(inner == doctest::Approx(outer).epsilon(1e-6).scale(1.0));
    }
    // gap bound at the kink
    CHECK(bqrnn::smoothed_check_loss(0.0, tau, eps) <=
          eps * std::max(tau, 1.0 - tau) + 1e-15);
    // derivative matches a central difference of the loss
    for (double u : {-0.004, 0.0, 0.007}) {
      const double h = 1e-7;
      const double fd = (bqrnn::smoothed_check_loss(u + h, tau, eps) -
                         bqrnn::smoothed_check_loss(u - h, tau, eps)) /
                        (2.0 * h);
      CHECK(bqrnn::smoothed_check_deriv(u, tau, eps) ==
            doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("baselines: qrnn gradient matches central finite differences") {
  const Dataset data = one_covariate(20, 8);
  const QuantileSpec spec(0.35);
  const double eps = 0.05;
  bqrnn::NetworkParams params;
  params.beta = (bqrnn::Vector(3) << 0.4, -0.8, 1.1).finished();
  params.gamma = (bqrnn::Matrix(2, 2) << 0.2, 0.6, -0.5, 0.9).finished();

  bqrnn::Vector grad;
  const double loss =
      bqrnn::qrnn_loss_gradient(params, data.x, data.y, spec, eps, &grad);
  CHECK(std::isfinite(loss));
  const bqrnn::Vector theta = bqrnn::flatten(params);
  REQUIRE(grad.size() == theta.size());
  const double h = 1e-6;
  for (bqrnn::Index i = 0; i < theta.size(); ++i) {
    bqrnn::Vector up = theta, dn = theta;
    up(i) += h;
    dn(i) -= h;
    const double lu = bqrnn::qrnn_loss_gradient(
        bqrnn::unflatten(up, 2, 1), data.x, data.y, spec, eps, nullptr);
    const double ld = bqrnn::qrnn_loss_gradient(
        bqrnn::unflatten(dn, 2, 1), data.x, data.y, spec, eps, nullptr);
    const double fd = (lu - ld) / (2.0 * h);
    INFO("coordinate ", i);
    CHECK(grad(i) == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("baselines: qrnn training is deterministic and monotone") {
  const Dataset data = one_covariate(50, 9);
  const QuantileSpec spec(0.5);
  bqrnn::QrnnOptions opts;
  opts.epochs = 300;
  opts.restarts = 1;
  opts.seed = 4;
  const bqrnn::QrnnFit a = bqrnn::fit_qrnn(data, spec, 2, opts);
  const bqrnn::QrnnFit b = bqrnn::fit_qrnn(data, spec, 2, opts);
  CHECK((bqrnn::flatten(a.params) - bqrnn::flatten(b.params))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  REQUIRE(!a.train_loss_trace.empty());
  for (std::size_t i = 1; i < a.train_loss_trace.size(); ++i) {
    CHECK(a.train_loss_trace[i] <= a.train_loss_trace[i - 1] + 1e-12);
  }
  // default smoothing resolves to 1e-3 * sd(y)
  const double n = static_cast<double>(data.n());
  const double sd = std::sqrt(
      (data.y.array() - data.y.mean()).square().sum() / (n - 1.0));
  CHECK(a.smoothing_eps == doctest::Approx(1e-3 * sd).epsilon(1e-12));

  bqrnn::QrnnOptions expl = opts;
  expl.smoothing_eps = 0.02;
  CHECK(bqrnn::fit_qrnn(data, spec, 2, expl).smoothing_eps == 0.02);
}

TEST_CASE("baselines: qrnn restarts keep the best run") {
  const Dataset data = one_covariate(50, 10);
  const QuantileSpec spec(0.25);
  bqrnn::QrnnOptions single;
  single.epochs = 200;
  single.restarts = 1;
  single.seed = 12;
  bqrnn::QrnnOptions multi = single;
  multi.restarts = 4;
  const double loss1 = bqrnn::fit_qrnn(data, spec, 2, single)
                           .train_loss_trace.back();
  const double loss4 = bqrnn::fit_qrnn(data, spec, 2, multi)
                           .train_loss_trace.back();
  CHECK(loss4 <= loss1 + 1e-12);
}

TEST_CASE("baselines: qrnn approximates an exact linear relation") {
  Dataset data = one_covariate(60, 11);
  data.y = 1.0 + 0.5 * data.x.col(0).array();
  bqrnn::QrnnOptions opts;
  opts.epochs = 2000;
  opts.restarts = 2;
  opts.seed = 3;
  const bqrnn::QrnnFit fit = bqrnn::fit_qrnn(data, QuantileSpec(0.5), 3, opts);
  double worst = 0.0;
  for (bqrnn::Index i = 0; i < data.n(); ++i) {
    const bqrnn::Vector xi = data.x.row(i).transpose();
    worst = std::max(worst,
                     std::abs(bqrnn::forward(fit.params, xi) - data.y(i)));
  }
  CHECK(worst < 0.15);
}

TEST_CASE("baselines: fit_bqr matches run_linear_gibbs on [1 X]") {
  const Dataset data = one_covariate(20, 12);
  const QuantileSpec spec(0.5);
  bqrnn::Priors priors;
  priors.beta_mean = bqrnn::Vector::Zero(2);
  priors.gamma_mean = bqrnn::Matrix(0, 2);
  bqrnn::ChainConfig cfg;
  cfg.n_iter = 200;
  cfg.burn_in_fraction = 0.5;
  cfg.thin = 2;
  cfg.seed = 21;

  const bqrnn::ChainOutput a = bqrnn::fit_bqr(data, priors, spec, cfg, 3);
  bqrnn::Matrix design(data.n(), 2);
  design.col(0).setOnes();
  design.col(1) = data.x.col(0);
  const bqrnn::ChainOutput b = bqrnn::run_linear_gibbs(
      design, data, priors, spec, cfg, bqrnn::Vector::Zero(2), 3);
  REQUIRE(a.draws.size() == b.draws.size());
  CHECK(a.log_posterior_trace == b.log_posterior_trace);
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    CHECK((a.draws[i].beta - b.draws[i].beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.draws[i].sigma == b.draws[i].sigma);
  }
  CHECK(a.proposal_counts.empty());

  const bqrnn::ChainOutput c = bqrnn::fit_bqr(data, priors, spec, cfg, 4);
  CHECK(c.log_posterior_trace != a.log_posterior_trace);
}
