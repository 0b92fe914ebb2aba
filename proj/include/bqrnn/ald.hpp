#pragma once

#include <cstdint>

#include "bqrnn/rng.hpp"

namespace bqrnn {

// Fixed quantile level tau in (0,1) together with the constants of the
// asymmetric-Laplace location-scale mixture derived from it:
//   theta    = (1-2*tau) / (tau*(1-tau))
//   kappa    = sqrt(2 / (tau*(1-tau)))
//   xi       = 1 - 2*tau          (latent shift per unit of v)
//   zeta_num = tau*(1-tau)        (latent exponential rate is zeta_num/sigma)
struct QuantileSpec {
  double tau;
  double theta;
  double kappa;
  double xi;
  double zeta_num;

  explicit QuantileSpec(double tau_level);
};

// Check (pinball) loss u * (tau - 1{u<0}).
double check_loss(double u, const QuantileSpec& spec);

// log f(y | mu, sigma) of the asymmetric Laplace density
// tau*(1-tau)/sigma * exp{-rho_tau((y-mu)/sigma)}.
double ald_logpdf(double y, double mu, double sigma, const QuantileSpec& spec);

struct MixtureDensityEstimate {
  double density;    // Monte Carlo mean of the normal kernel
  double std_error;  // standard error of that mean
};

// Monte Carlo evaluation of the normal-exponential mixture representation:
// the average of N(y; mu + xi*v, 2*sigma*v) over v ~ Exp(mean sigma/zeta_num)
// converges to exp(ald_logpdf(y, mu, sigma)).
MixtureDensityEstimate ald_mixture_density_mc(double y, double mu, double sigma,
                                              const QuantileSpec& spec,
                                              long n_draws, std::uint64_t seed);

double ald_mixture_logdensity_mc(double y, double mu, double sigma,
                                 const QuantileSpec& spec, long n_draws,
                                 std::uint64_t seed);

// Hellinger distance between ALD(mu1, 1, tau) and ALD(mu2, 1, tau); closed
// form in delta = |mu1 - mu2| with an analytic limit branch near tau = 1/2.
double hellinger_ald(double mu1, double mu2, const QuantileSpec& spec);

}  // namespace bqrnn
