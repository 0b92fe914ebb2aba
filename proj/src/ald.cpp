#include "bqrnn/ald.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bqrnn {

QuantileSpec::QuantileSpec(double tau_level) {
  if (!(tau_level > 0.0 && tau_level < 1.0)) {
    throw std::invalid_argument("QuantileSpec: tau must lie in (0,1), got " +
                                std::to_string(tau_level));
  }
  tau = tau_level;
  zeta_num = tau * (1.0 - tau);
  theta = (1.0 - 2.0 * tau) / zeta_num;
  kappa = std::sqrt(2.0 / zeta_num);
  xi = 1.0 - 2.0 * tau;
}

double check_loss(double u, const QuantileSpec& spec) {
  return u * (spec.tau - (u < 0.0 ? 1.0 : 0.0));
}

double ald_logpdf(double y, double mu, double sigma, const QuantileSpec& spec) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("ald_logpdf: sigma must be positive, got " +
                            std::to_string(sigma));
  }
  const double u = (y - mu) / sigma;
  return std::log(spec.tau) + std::log1p(-spec.tau) - std::log(sigma) -
         check_loss(u, spec);
}

MixtureDensityEstimate ald_mixture_density_mc(double y, double mu, double sigma,
                                              const QuantileSpec& spec,
                                              long n_draws, std::uint64_t seed) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("ald_mixture_density_mc: sigma must be positive");
  }
  if (n_draws < 1) {
    throw std::invalid_argument("ald_mixture_density_mc: n_draws must be >= 1");
  }
  RngStream rng(seed);
  const double v_mean = sigma / spec.zeta_num;
  double mean = 0.0;
  double m2 = 0.0;
  for (long i = 0; i < n_draws; ++i) {
    const double v = -v_mean * std::log(rng.next_unit());
    const double var = 2.0 * sigma * v;
    const double d = y - mu - spec.xi * v;
    const double kernel =
        std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
    const double delta = kernel - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (kernel - mean);
  }
  double se = 0.0;
  if (n_draws > 1) {
    se = std::sqrt(m2 / static_cast<double>(n_draws - 1) /
                   static_cast<double>(n_draws));
  }
  return {mean, se};
}

double ald_mixture_logdensity_mc(double y, double mu, double sigma,
                                 const QuantileSpec& spec, long n_draws,
                                 std::uint64_t seed) {
  const MixtureDensityEstimate est =
      ald_mixture_density_mc(y, mu, sigma, spec, n_draws, seed);
  if (!(est.density > 0.0)) {
    throw std::runtime_error(
        "ald_mixture_logdensity_mc: Monte Carlo density estimate is not "
        "positive; increase n_draws");
  }
  return std::log(est.density);
}

double hellinger_ald(double mu1, double mu2, const QuantileSpec& spec) {
  const double delta = std::abs(mu1 - mu2);
  const double tau = spec.tau;
  double affinity;  // integral of sqrt(f1 f2)
  if (std::abs(1.0 - 2.0 * tau) < 1e-6) {
    affinity = std::exp(-delta / 4.0) * (1.0 + delta / 4.0);
  } else {
    affinity = ((1.0 - tau) * std::exp(-delta * tau / 2.0) -
                tau * std::exp(-delta * (1.0 - tau) / 2.0)) /
               (1.0 - 2.0 * tau);
  }
  const double d2 = std::max(0.0, 2.0 - 2.0 * affinity);
  return std::sqrt(d2);
}

}  // namespace bqrnn
