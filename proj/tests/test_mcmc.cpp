#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bqrnn/mcmc.hpp"
#include "bqrnn/samplers.hpp"
#include "testutil.hpp"

using bqrnn::ChainConfig;
using bqrnn::ChainOutput;
using bqrnn::Dataset;
using bqrnn::LatentState;
using bqrnn::Priors;
using bqrnn::QuantileSpec;
using bqrnn::RngStream;

namespace {

Dataset tiny_data(bqrnn::Index n, std::uint64_t seed) {
  bqrnn::ScenarioSpec spec;
  spec.n = n;
  spec.beta1 = (bqrnn::Vector(1) << 2.0).finished();
  spec.beta2 = (bqrnn::Vector(1) << 0.4).finished();
  RngStream rng(seed, 1);
  return bqrnn::generate_scenario(spec, rng);
}

LatentState fixed_state(const Dataset& data, int k) {
  LatentState state;
  state.beta = bqrnn::Vector::LinSpaced(k + 1, 0.5, 1.5);
  state.gamma = bqrnn::Matrix(k, data.p() + 1);
  for (int j = 0; j < k; ++j)
    for (bqrnn::Index c = 0; c <= data.p(); ++c)
      state.gamma(j, c) = 0.3 * (j + 1) - 0.2 * static_cast<double>(c);
  state.sigma = 0.8;
  state.v = bqrnn::Vector::LinSpaced(data.n(), 0.5, 2.0);
  return state;
}

// Full log joint of (y, v, beta, gamma, sigma), constants included, written
// straight from the model definition.
double log_joint_oracle(const LatentState& state, const Dataset& data,
                        const Priors& priors, const QuantileSpec& spec) {
  const bqrnn::Matrix design = bqrnn::design_matrix(data.x, state.gamma);
  const double zeta = spec.zeta_num;
  double lp = 0.0;
  for (bqrnn::Index i = 0; i < data.n(); ++i) {
    const double mu = design.row(i).dot(state.beta) + spec.xi * state.v(i);
    const double var = 2.0 * state.sigma * state.v(i);
    lp += -0.5 * std::log(2.0 * M_PI * var) -
          (data.y(i) - mu) * (data.y(i) - mu) / (2.0 * var);
    lp += std::log(zeta / state.sigma) - zeta * state.v(i) / state.sigma;
  }
  for (bqrnn::Index i = 0; i < state.beta.size(); ++i) {
    const double d = state.beta(i) - priors.beta_mean(i);
    lp += -0.5 * std::log(2.0 * M_PI * priors.sigma0_sq) -
          d * d / (2.0 * priors.sigma0_sq);
  }
  for (bqrnn::Index j = 0; j < state.gamma.rows(); ++j) {
    for (bqrnn::Index c = 0; c < state.gamma.cols(); ++c) {
      const double d = state.gamma(j, c) - priors.gamma_mean(j, c);
      lp += -0.5 * std::log(2.0 * M_PI * priors.sigma1_sq) -
            d * d / (2.0 * priors.sigma1_sq);
    }
  }
  const double half_a = 0.5 * priors.a, half_b = 0.5 * priors.b;
  lp += half_a * std::log(half_b) - std::lgamma(half_a) -
        (half_a + 1.0) * std::log(state.sigma) - half_b / state.sigma;
  return lp;
}

}  // namespace

TEST_CASE("mcmc: default_priors shapes and hyperparameters") {
  const Priors priors = bqrnn::default_priors(3, 2);
  CHECK(priors.beta_mean.size() == 4);
  CHECK(priors.beta_mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(priors.gamma_mean.rows() == 3);
  CHECK(priors.gamma_mean.cols() == 3);
  CHECK(priors.sigma0_sq == 100.0);
  CHECK(priors.sigma1_sq == 100.0);
  CHECK(priors.a == 3.0);
  CHECK(priors.b == 0.1);
}

TEST_CASE("mcmc: chain config bookkeeping and validation") {
  ChainConfig cfg;
  cfg.n_iter = 40;
  cfg.burn_in_fraction = 0.5;
  cfg.thin = 3;
  CHECK(cfg.burn_in() == 20);
  CHECK(cfg.retained() == 6);

  cfg.n_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.n_iter = 40;
  cfg.thin = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.thin = 3;
  cfg.burn_in_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.burn_in_fraction = 0.5;
  cfg.mh_step_sd = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.mh_step_sd = 0.01;
  cfg.thin = 25;  // nothing retained
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.thin = 3;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("mcmc: log_unnorm_posterior differences match the model density") {
  const Dataset data = tiny_data(6, 31);
  const QuantileSpec spec(0.3);
  const Priors priors = bqrnn::default_priors(2, data.p());
  const LatentState a = fixed_state(data, 2);
  LatentState b = a;
  b.beta(1) += 0.7;
  b.gamma(0, 1) -= 0.4;
  b.sigma = 1.3;
  b.v(2) = 0.9;

  const double delta = bqrnn::log_unnorm_posterior(b, data, priors, spec) -
                       bqrnn::log_unnorm_posterior(a, data, priors, spec);
  const double delta_oracle = log_joint_oracle(b, data, priors, spec) -
                              log_joint_oracle(a, data, priors, spec);
  CHECK(delta == doctest::Approx(delta_oracle).epsilon(1e-10));

  // the fixed-design overload agrees when handed the matching design
  const bqrnn::Matrix design = bqrnn::design_matrix(data.x, a.gamma);
  CHECK(bqrnn::log_unnorm_posterior(a, data, priors, spec) ==
        doctest::Approx(bqrnn::log_unnorm_posterior(a, design, data, priors,
                                                    spec))
            .epsilon(1e-13));
}

TEST_CASE("mcmc: sample_beta draws from the conjugate conditional") {
  const Dataset data = tiny_data(8, 77);
  const QuantileSpec spec(0.7);
  const Priors priors = bqrnn::default_priors(2, data.p());
  const LatentState state = fixed_state(data, 2);
  const bqrnn::Matrix design = bqrnn::design_matrix(data.x, state.gamma);

  // conditional precision and mean computed directly from the definition
  const bqrnn::Matrix vinv = state.v.cwiseInverse().asDiagonal();
  const bqrnn::Matrix prec =
      design.transpose() * vinv * design / (2.0 * state.sigma) +
      bqrnn::Matrix::Identity(3, 3) / priors.sigma0_sq;
  const bqrnn::Vector lin =
      design.transpose() * vinv * (data.y - spec.xi * state.v) /
          (2.0 * state.sigma) +
      priors.beta_mean / priors.sigma0_sq;
  const bqrnn::Vector mean = prec.inverse() * lin;
  const bqrnn::Matrix cov = prec.inverse();

  const int m = 50000;
  RngStream rng(5150, 0);
  bqrnn::Vector sum = bqrnn::Vector::Zero(3);
  bqrnn::Matrix sum_outer = bqrnn::Matrix::Zero(3, 3);
  for (int i = 0; i < m; ++i) {
    const bqrnn::Vector d = bqrnn::sample_beta(state, design, data, priors,
                                               spec, rng);
    sum += d;
    sum_outer += (d - mean) * (d - mean).transpose();
  }
  for (int i = 0; i < 3; ++i) {
    const double se = std::sqrt(cov(i, i) / m);
    CHECK(std::abs(sum(i) / m - mean(i)) <= 4.0 * se);
  }
  const bqrnn::Matrix cov_hat = sum_outer / m;
  CHECK((cov_hat - cov).cwiseAbs().maxCoeff() <
        0.05 * cov.cwiseAbs().maxCoeff() + 1e-6);
}

TEST_CASE("mcmc: sample_sigma draws from the conjugate conditional") {
  const Dataset data = tiny_data(8, 78);
  const QuantileSpec spec(0.25);
  const Priors priors = bqrnn::default_priors(1, data.p());
  const LatentState state = fixed_state(data, 1);
  const bqrnn::Matrix design = bqrnn::design_matrix(data.x, state.gamma);

  const bqrnn::Vector r = data.y - design * state.beta - spec.xi * state.v;
  const double shape = (3.0 * data.n() + priors.a) / 2.0;
  const double rate = 0.25 * (r.array().square() / state.v.array()).sum() +
                      spec.zeta_num * state.v.sum() + priors.b / 2.0;
  const double expect_mean = rate / (shape - 1.0);

  const int m = 50000;
  RngStream rng(909, 0);
  std::vector<double> draws(m);
  for (double& d : draws) {
    d = bqrnn::sample_sigma(state, design, data, priors, spec, rng);
    REQUIRE(d > 0.0);
  }
  const auto [mean, se] = testutil::mean_se(draws);
  CHECK(std::abs(mean - expect_mean) <= 4.0 * se);
}

TEST_CASE("mcmc: sample_v coordinates follow their GIG conditionals") {
  const Dataset data = tiny_data(3, 79);
  const QuantileSpec spec(0.6);
  const LatentState state = fixed_state(data, 1);
  const bqrnn::Matrix design = bqrnn::design_matrix(data.x, state.gamma);
  const bqrnn::Vector r = data.y - design * state.beta;

  const int m = 20000;
  RngStream rng(3131, 0);
  std::vector<std::vector<double>> per_coord(3, std::vector<double>(m));
  for (int s = 0; s < m; ++s) {
    const bqrnn::Vector v = bqrnn::sample_v(state, design, data, spec, rng);
    REQUIRE(v.size() == 3);
    for (int i = 0; i < 3; ++i) per_coord[i][s] = v(i);
  }
  for (int i = 0; i < 3; ++i) {
    const double rho1 = std::abs(r(i)) / std::sqrt(2.0 * state.sigma);
    const double rho2 = 1.0 / std::sqrt(2.0 * state.sigma);
    std::sort(per_coord[i].begin(), per_coord[i].end());
    const std::vector<double> cdf =
        testutil::gig_half_cdf(rho1, rho2, per_coord[i]);
    INFO("coordinate ", i);
    CHECK(testutil::ks_statistic(cdf) < testutil::ks_critical(0.01, m));
  }
}

TEST_CASE("mcmc: metropolis step accepts identical proposals") {
  const Dataset data = tiny_data(6, 80);
  const QuantileSpec spec(0.5);
  const Priors priors = bqrnn::default_priors(1, data.p());
  LatentState state = fixed_state(data, 1);
  bqrnn::Matrix design = bqrnn::design_matrix(data.x, state.gamma);
  RngStream rng(1, 0);
  for (int rep = 0; rep < 32; ++rep) {
    CHECK(bqrnn::mh_update_gamma_j(state, 0, design, data, priors, spec, rng,
                                   0.0));
  }
}

TEST_CASE("mcmc: metropolis step keeps state and design consistent") {
  const Dataset data = tiny_data(10, 81);
  const QuantileSpec spec(0.4);
  const Priors priors = bqrnn::default_priors(2, data.p());
  LatentState state = fixed_state(data, 2);
  bqrnn::Matrix design = bqrnn::design_matrix(data.x, state.gamma);
  RngStream rng(22, 0);
  int accepted = 0;
  for (int rep = 0; rep < 200; ++rep) {
    for (bqrnn::Index j = 0; j < 2; ++j) {
      accepted += bqrnn::mh_update_gamma_j(state, j, design, data, priors,
                                           spec, rng, 0.5);
    }
  }
  CHECK(accepted > 0);
  CHECK(accepted < 400);
  const bqrnn::Matrix rebuilt = bqrnn::design_matrix(data.x, state.gamma);
  CHECK((rebuilt - design).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mcmc: run_chain bookkeeping, determinism and trace consistency") {
  const Dataset data = tiny_data(12, 82);
  const QuantileSpec spec(0.5);
  const Priors priors = bqrnn::default_priors(1, data.p());
  ChainConfig cfg;
  cfg.n_iter = 40;
  cfg.burn_in_fraction = 0.5;
  cfg.thin = 3;
  cfg.mh_step_sd = 0.1;
  cfg.seed = 99;

  bqrnn::NetworkParams init;
  init.beta = bqrnn::Vector::Zero(2);
  init.gamma = bqrnn::Matrix::Zero(1, 2);

  const ChainOutput out = bqrnn::run_chain(data, priors, spec, cfg, init, 4);
  REQUIRE(out.draws.size() == 6);
  const std::vector<bqrnn::Index> expect_iters{22, 25, 28, 31, 34, 37};
  CHECK(out.draw_iterations == expect_iters);
  REQUIRE(out.log_posterior_trace.size() == 40);
  for (double lp : out.log_posterior_trace) CHECK(std::isfinite(lp));
  REQUIRE(out.accept_counts.size() == 1);
  CHECK(out.proposal_counts[0] == 40);
  CHECK(out.accept_counts[0] <= 40);

  // the recorded trace is the posterior kernel at the recorded state
  for (std::size_t d = 0; d < out.draws.size(); ++d) {
    const double lp = bqrnn::log_unnorm_posterior(out.draws[d], data, priors,
                                                  spec);
    const auto s = static_cast<std::size_t>(out.draw_iterations[d]);
    CHECK(lp == doctest::Approx(out.log_posterior_trace[s]).epsilon(1e-9));
  }

  const ChainOutput again = bqrnn::run_chain(data, priors, spec, cfg, init, 4);
  CHECK(again.log_posterior_trace == out.log_posterior_trace);
  CHECK((again.draws.back().beta - out.draws.back().beta)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const ChainOutput other = bqrnn::run_chain(data, priors, spec, cfg, init, 5);
  CHECK(other.log_posterior_trace != out.log_posterior_trace);

  // initial values must be finite and dimensioned
  bqrnn::NetworkParams bad = init;
  bad.beta(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bqrnn::run_chain(data, priors, spec, cfg, bad, 4),
                  std::invalid_argument);
}

TEST_CASE("mcmc: linear gibbs recovers the quadrature posterior") {
  // one covariate, so the (beta0, beta1, sigma) posterior is a cheap grid
  bqrnn::ScenarioSpec sspec;
  sspec.n = 25;
  sspec.beta1 = (bqrnn::Vector(1) << 2.0).finished();
  sspec.beta2 = (bqrnn::Vector(1) << 0.4).finished();
  RngStream drng(404, 1);
  const Dataset data = bqrnn::generate_scenario(sspec, drng);
  const QuantileSpec spec(0.3);

  Priors priors;
  priors.beta_mean = bqrnn::Vector::Zero(2);
  priors.gamma_mean = bqrnn::Matrix(0, 2);

  bqrnn::Matrix design(data.n(), 2);
  design.col(0).setOnes();
  design.col(1) = data.x.col(0);

  ChainConfig cfg;
  cfg.n_iter = 30000;
  cfg.burn_in_fraction = 0.5;
  cfg.thin = 5;
  cfg.seed = 7;
  const ChainOutput out = bqrnn::run_linear_gibbs(design, data, priors, spec,
                                                  cfg, bqrnn::Vector::Zero(2));
  REQUIRE(out.draws.size() == 3000);
  double b0 = 0.0, b1 = 0.0, sg = 0.0;
  for (const LatentState& s : out.draws) {
    b0 += s.beta(0);
    b1 += s.beta(1);
    sg += s.sigma;
  }
  b0 /= 3000.0;
  b1 /= 3000.0;
  sg /= 3000.0;

  // grid posterior of the exact ALD likelihood times the same priors
  const int nb = 81, ns = 61;
  const double b0_lo = b0 - 1.5, b0_hi = b0 + 1.5;
  const double b1_lo = b1 - 0.8, b1_hi = b1 + 0.8;
  const double s_lo = std::max(0.02, sg / 6.0), s_hi = sg * 5.0;
  std::vector<double> lps;
  lps.reserve(nb * nb * ns);
  double lp_max = -1e300;
  for (int i = 0; i < nb; ++i) {
    const double bb0 = b0_lo + (b0_hi - b0_lo) * i / (nb - 1);
    for (int j = 0; j < nb; ++j) {
      const double bb1 = b1_lo + (b1_hi - b1_lo) * j / (nb - 1);
      for (int l = 0; l < ns; ++l) {
        const double ss = s_lo + (s_hi - s_lo) * l / (ns - 1);
        double lp = -(bb0 * bb0 + bb1 * bb1) / (2.0 * priors.sigma0_sq) -
                    (priors.a / 2.0 + 1.0) * std::log(ss) -
                    priors.b / (2.0 * ss);
        for (bqrnn::Index t = 0; t < data.n(); ++t) {
          lp += testutil::ald_logpdf_oracle(data.y(t), bb0 + bb1 * data.x(t, 0),
                                            ss, spec.tau);
        }
        lps.push_back(lp);
        lp_max = std::max(lp_max, lp);
      }
    }
  }
  double z = 0.0, m0 = 0.0, m1 = 0.0, msg = 0.0;
  std::size_t idx = 0;
  for (int i = 0; i < nb; ++i) {
    const double bb0 = b0_lo + (b0_hi - b0_lo) * i / (nb - 1);
    for (int j = 0; j < nb; ++j) {
      const double bb1 = b1_lo + (b1_hi - b1_lo) * j / (nb - 1);
      for (int l = 0; l < ns; ++l) {
        const double ss = s_lo + (s_hi - s_lo) * l / (ns - 1);
        const double w = std::exp(lps[idx++] - lp_max);
        z += w;
        m0 += w * bb0;
        m1 += w * bb1;
        msg += w * ss;
      }
    }
  }
  m0 /= z;
  m1 /= z;
  msg /= z;

  INFO("gibbs (", b0, ", ", b1, ", ", sg, ") grid (", m0, ", ", m1, ", ", msg,
       ")");
  CHECK(std::abs(b0 - m0) < 0.05);
  CHECK(std::abs(b1 - m1) < 0.03);
  CHECK(std::abs(sg - msg) < 0.05 * msg + 0.01);
}

TEST_CASE("mcmc: posterior_quantile_summary on hand-built draws") {
  ChainOutput out;
  LatentState d1, d2;
  d1.beta = (bqrnn::Vector(2) << 0.0, 1.0).finished();
  d2.beta = (bqrnn::Vector(2) << 2.0, 3.0).finished();
  d1.gamma = bqrnn::Matrix(0, 2);
  d2.gamma = bqrnn::Matrix(0, 2);
  d1.sigma = d2.sigma = 1.0;
  d1.v = d2.v = bqrnn::Vector::Ones(1);
  out.draws = {d1, d2};
  out.draw_iterations = {0, 1};

  bqrnn::Matrix x_eval(2, 1);
  x_eval << 1.0, 2.0;
  const bqrnn::QuantileSummary qs =
      bqrnn::posterior_quantile_summary(out, x_eval);
  // draw values: (1, 2) and (5, 8)
  CHECK(qs.mean(0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(qs.mean(1) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(qs.sd(0) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
  CHECK(qs.sd(1) == doctest::Approx(std::sqrt(18.0)).epsilon(1e-12));

  // network draws evaluate through the hidden layer
  LatentState nd;
  nd.beta = (bqrnn::Vector(2) << 0.5, 2.0).finished();
  nd.gamma = (bqrnn::Matrix(1, 2) << 0.1, -0.3).finished();
  nd.sigma = 1.0;
  nd.v = bqrnn::Vector::Ones(1);
  ChainOutput nout;
  nout.draws = {nd, nd};
  nout.draw_iterations = {0, 1};
  const bqrnn::QuantileSummary nqs =
      bqrnn::posterior_quantile_summary(nout, x_eval);
  bqrnn::NetworkParams np;
  np.beta = nd.beta;
  np.gamma = nd.gamma;
  const bqrnn::Vector x0 = x_eval.row(0).transpose();
  CHECK(nqs.mean(0) == doctest::Approx(bqrnn::forward(np, x0)).epsilon(1e-14));
  CHECK(nqs.sd(0) == 0.0);
}

TEST_CASE("mcmc: acceptance bookkeeping and chain csv output") {
  const Dataset data = tiny_data(10, 83);
  const QuantileSpec spec(0.5);
  const Priors priors = bqrnn::default_priors(2, data.p());
  ChainConfig cfg;
  cfg.n_iter = 30;
  cfg.burn_in_fraction = 0.0;
  cfg.thin = 1;
  cfg.mh_step_sd = 0.2;
  bqrnn::NetworkParams init;
  init.beta = bqrnn::Vector::Zero(3);
  init.gamma = bqrnn::Matrix::Zero(2, 2);
  const ChainOutput out = bqrnn::run_chain(data, priors, spec, cfg, init, 0);

  for (bqrnn::Index j = 0; j < 2; ++j) {
    const double r = bqrnn::acceptance_rate(out, j);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(r == doctest::Approx(static_cast<double>(out.accept_counts[j]) /
                               30.0));
  }
  const std::string summary = bqrnn::acceptance_summary(out);
  CHECK(summary.find("gamma_1") != std::string::npos);
  CHECK(summary.find("gamma_2") != std::string::npos);

  const std::string path = "/tmp/bqrnn_test_chain.csv";
  bqrnn::write_chain_csv(out, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header.find("iter") == 0);
  CHECK(header.find("sigma") != std::string::npos);
  CHECK(header.find("log_post") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 30);
  std::remove(path.c_str());
}
