#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bqrnn/ald.hpp"
#include "bqrnn/data.hpp"
#include "bqrnn/network.hpp"
#include "bqrnn/rng.hpp"
#include "bqrnn/types.hpp"

namespace bqrnn {

// Independent normal priors beta ~ N(beta_mean, sigma0_sq I), gamma_j ~
// N(gamma_mean row j, sigma1_sq I), and sigma ~ InvGamma(a/2, b/2).
struct Priors {
  Vector beta_mean;
  double sigma0_sq = 100.0;
  Matrix gamma_mean;
  double sigma1_sq = 100.0;
  double a = 3.0;
  double b = 0.1;
};
Priors default_priors(Index k, Index p);

struct ChainConfig {
  Index n_iter = 100000;
  double burn_in_fraction = 0.5;
  Index thin = 10;
  double mh_step_sd = 0.01;
  std::uint64_t seed = 0;
  Index n_chains = 1;

  Index burn_in() const;
  Index retained() const;
  void validate() const;
};

struct LatentState {
  Vector beta;   // output layer, or regression coefficients on a fixed design
  Matrix gamma;  // k x (p+1); zero rows for a fixed-design chain
  double sigma = 1.0;
  Vector v;      // latent exponential scales, one per observation
};

struct ChainOutput {
  std::vector<LatentState> draws;
  std::vector<Index> draw_iterations;           // sweep index of each draw
  std::vector<std::int64_t> accept_counts;      // per hidden unit
  std::vector<std::int64_t> proposal_counts;    // per hidden unit
  std::vector<double> log_posterior_trace;      // one entry per sweep
};

// Joint log posterior kernel (unnormalized) of (beta, gamma, sigma, v) under
// the asymmetric-Laplace mixture likelihood. The first overload builds the
// hidden design from state.gamma; the second takes it precomputed, which also
// serves fixed-design (linear) chains.
double log_unnorm_posterior(const LatentState& state, const Dataset& data,
                            const Priors& priors, const QuantileSpec& spec);
double log_unnorm_posterior(const LatentState& state, const Matrix& design,
                            const Dataset& data, const Priors& priors,
                            const QuantileSpec& spec);

// Conjugate draw of the output weights given everything else.
Vector sample_beta(const LatentState& state, const Matrix& design,
                   const Dataset& data, const Priors& priors,
                   const QuantileSpec& spec, RngStream& rng);

// Random-walk Metropolis update of hidden unit j (0-based). On acceptance the
// state row and design column j+1 are refreshed in place; returns whether the
// proposal was accepted.
bool mh_update_gamma_j(LatentState& state, Index j, Matrix& design,
                       const Dataset& data, const Priors& priors,
                       const QuantileSpec& spec, RngStream& rng,
                       double step_sd);

// Conjugate inverse-gamma draw of the scale given everything else.
double sample_sigma(const LatentState& state, const Matrix& design,
                    const Dataset& data, const Priors& priors,
                    const QuantileSpec& spec, RngStream& rng);

// Per-observation generalized-inverse-Gaussian draws of the latent scales.
Vector sample_v(const LatentState& state, const Matrix& design,
                const Dataset& data, const QuantileSpec& spec, RngStream& rng);

// Full Gibbs/Metropolis chain for the network model. Sweep order: beta, each
// gamma_j in turn, sigma, v. sigma starts at 1 and v at ones.
ChainOutput run_chain(const Dataset& data, const Priors& priors,
                      const QuantileSpec& spec, const ChainConfig& config,
                      const NetworkParams& init, std::uint64_t stream_id = 0);

// Gibbs chain on a fixed design matrix (no Metropolis blocks), used for
// linear Bayesian quantile regression.
ChainOutput run_linear_gibbs(const Matrix& design, const Dataset& data,
                             const Priors& priors, const QuantileSpec& spec,
                             const ChainConfig& config, const Vector& beta_init,
                             std::uint64_t stream_id = 0);

struct QuantileSummary {
  Vector mean;
  Vector sd;
};

// Pointwise posterior mean and sd of the conditional quantile surface over
// the retained draws. Network draws rebuild the hidden design per draw;
// draws with no hidden units are evaluated on the linear design [1 X].
QuantileSummary posterior_quantile_summary(const ChainOutput& output,
                                           const Matrix& x_eval);

double acceptance_rate(const ChainOutput& output, Index j);
std::string acceptance_summary(const ChainOutput& output);

void write_chain_csv(const ChainOutput& output, const std::string& path);

}  // namespace bqrnn
