#include "bqrnn/mcmc.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bqrnn/samplers.hpp"

namespace bqrnn {

Priors default_priors(Index k, Index p) {
  Priors priors;
  priors.beta_mean = Vector::Zero(k + 1);
  priors.gamma_mean = Matrix::Zero(k, p + 1);
  return priors;
}

Index ChainConfig::burn_in() const {
  return static_cast<Index>(
      std::floor(burn_in_fraction * static_cast<double>(n_iter)));
}

Index ChainConfig::retained() const { return (n_iter - burn_in()) / thin; }

void ChainConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("ChainConfig: n_iter must be >= 1");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw std::invalid_argument(
        "ChainConfig: burn_in_fraction must lie in [0,1)");
  }
  if (thin < 1) throw std::invalid_argument("ChainConfig: thin must be >= 1");
  if (!(mh_step_sd > 0.0)) {
    throw std::invalid_argument("ChainConfig: mh_step_sd must be positive");
  }
  if (n_chains < 1) throw std::invalid_argument("ChainConfig: n_chains must be >= 1");
  if (retained() < 1) {
    throw std::invalid_argument(
        "ChainConfig: no draws would be retained; lower burn_in_fraction or "
        "thin, or raise n_iter");
  }
}

namespace {

void check_latents(const LatentState& state, Index n, const char* where) {
  if (!(state.sigma > 0.0)) {
    throw std::domain_error(std::string(where) + ": sigma must be positive");
  }
  if (state.v.size() != n) {
    throw std::invalid_argument(std::string(where) + ": v must have length n");
  }
  if ((state.v.array() <= 0.0).any()) {
    throw std::domain_error(std::string(where) + ": v must be positive");
  }
}

Vector mixture_residual(const LatentState& state, const Matrix& design,
                        const Dataset& data, const QuantileSpec& spec) {
  return data.y - design * state.beta - spec.xi * state.v;
}

}  // namespace

double log_unnorm_posterior(const LatentState& state, const Matrix& design,
                            const Dataset& data, const Priors& priors,
                            const QuantileSpec& spec) {
  const Index n = data.n();
  check_latents(state, n, "log_unnorm_posterior");
  if (design.rows() != n || design.cols() != state.beta.size()) {
    throw std::invalid_argument("log_unnorm_posterior: design shape mismatch");
  }
  const Vector r = mixture_residual(state, design, data, spec);
  const double quad = (r.array().square() / state.v.array()).sum();
  double lp = -1.5 * static_cast<double>(n) * std::log(state.sigma) -
              0.5 * state.v.array().log().sum() -
              quad / (4.0 * state.sigma) -
              (spec.zeta_num / state.sigma) * state.v.sum();
  lp -= (state.beta - priors.beta_mean).squaredNorm() / (2.0 * priors.sigma0_sq);
  for (Index j = 0; j < state.gamma.rows(); ++j) {
    lp -= (state.gamma.row(j) - priors.gamma_mean.row(j)).squaredNorm() /
          (2.0 * priors.sigma1_sq);
  }
  lp -= (0.5 * priors.a + 1.0) * std::log(state.sigma) +
        0.5 * priors.b / state.sigma;
  return lp;
}

double log_unnorm_posterior(const LatentState& state, const Dataset& data,
                            const Priors& priors, const QuantileSpec& spec) {
  const Matrix design = design_matrix(data.x, state.gamma);
  return log_unnorm_posterior(state, design, data, priors, spec);
}

Vector sample_beta(const LatentState& state, const Matrix& design,
                   const Dataset& data, const Priors& priors,
                   const QuantileSpec& spec, RngStream& rng) {
  check_latents(state, data.n(), "sample_beta");
  const Index m = design.cols();
  if (priors.beta_mean.size() != m) {
    throw std::invalid_argument("sample_beta: beta_mean length mismatch");
  }
  const Vector w = state.v.cwiseInverse();
  const Matrix lw = design.array().colwise() * w.array();
  Matrix prec = (design.transpose() * lw) / (2.0 * state.sigma);
  prec.diagonal().array() += 1.0 / priors.sigma0_sq;
  const Vector target = data.y - spec.xi * state.v;
  const Vector linear = (lw.transpose() * target) / (2.0 * state.sigma) +
                        priors.beta_mean / priors.sigma0_sq;
  return mvnormal_canonical(rng, prec, linear);
}

bool mh_update_gamma_j(LatentState& state, Index j, Matrix& design,
                       const Dataset& data, const Priors& priors,
                       const QuantileSpec& spec, RngStream& rng,
                       double step_sd) {
  const Index k = state.gamma.rows();
  if (j < 0 || j >= k) {
    throw std::invalid_argument("mh_update_gamma_j: hidden unit index " +
                                std::to_string(j) + " out of range");
  }
  if (!(step_sd >= 0.0)) {
    throw std::invalid_argument("mh_update_gamma_j: step_sd must be >= 0");
  }
  check_latents(state, data.n(), "mh_update_gamma_j");
  const Index w = state.gamma.cols();
  Vector cand_row(w);
  for (Index h = 0; h < w; ++h) {
    cand_row(h) = state.gamma(j, h) + step_sd * standard_normal(rng);
  }
  const Vector cand_col = design_column(data.x, cand_row);
  const double beta_j = state.beta(j + 1);

  const Vector r = mixture_residual(state, design, data, spec);
  const Vector r_cand = r - beta_j * (cand_col - design.col(j + 1));
  const double quad_cur = (r.array().square() / state.v.array()).sum();
  const double quad_cand = (r_cand.array().square() / state.v.array()).sum();

  const Vector prior_mean = priors.gamma_mean.row(j).transpose();
  const double prior_cur =
      (state.gamma.row(j).transpose() - prior_mean).squaredNorm();
  const double prior_cand = (cand_row - prior_mean).squaredNorm();

  const double log_ratio =
      -(quad_cand - quad_cur) / (4.0 * state.sigma) -
      (prior_cand - prior_cur) / (2.0 * priors.sigma1_sq);

  const double u = rng.next_unit();
  if (std::log(u) < log_ratio) {
    state.gamma.row(j) = cand_row.transpose();
    design.col(j + 1) = cand_col;
    return true;
  }
  return false;
}

double sample_sigma(const LatentState& state, const Matrix& design,
                    const Dataset& data, const Priors& priors,
                    const QuantileSpec& spec, RngStream& rng) {
  check_latents(state, data.n(), "sample_sigma");
  const Vector r = mixture_residual(state, design, data, spec);
  const double quad = (r.array().square() / state.v.array()).sum();
  const double shape = 0.5 * (3.0 * static_cast<double>(data.n()) + priors.a);
  const double rate =
      0.25 * quad + spec.zeta_num * state.v.sum() + 0.5 * priors.b;
  return inverse_gamma(rng, shape, rate);
}

Vector sample_v(const LatentState& state, const Matrix& design,
                const Dataset& data, const QuantileSpec& spec, RngStream& rng) {
  // The GIG parameters are tau-free: xi^2 + 4*tau*(1-tau) = 1 collapses the
  // linear-in-v coefficient to 1/(4 sigma).
  (void)spec;
  check_latents(state, data.n(), "sample_v");
  const Vector r = data.y - design * state.beta;  // residual without xi*v
  const double inv_scale = 1.0 / std::sqrt(2.0 * state.sigma);
  const double rho2 = inv_scale;
  Vector v(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    const double rho1 = std::abs(r(i)) * inv_scale;
    v(i) = gig_half(rng, {0.5, rho1, rho2});
  }
  return v;
}

namespace {

const char* bad_init_component(const LatentState& state, const Matrix& design,
                               const Dataset& data, const QuantileSpec& spec) {
  if (!state.beta.allFinite()) return "beta";
  if (state.gamma.size() > 0 && !state.gamma.allFinite()) return "gamma";
  if (!std::isfinite(state.sigma)) return "sigma";
  if (!state.v.allFinite()) return "v";
  if (!design.allFinite()) return "gamma (design saturates to non-finite)";
  const Vector r = mixture_residual(state, design, data, spec);
  if (!r.allFinite() ||
      !std::isfinite((r.array().square() / state.v.array()).sum())) {
    return "beta/gamma (residual quadratic overflows)";
  }
  return nullptr;
}

template <typename SweepFn>
ChainOutput run_sweeps(const Dataset& data, const Priors& priors,
                       const QuantileSpec& spec, const ChainConfig& config,
                       LatentState state, Matrix design, Index n_mh_blocks,
                       RngStream rng, SweepFn sweep) {
  if (const char* bad = bad_init_component(state, design, data, spec)) {
    throw std::invalid_argument(
        std::string("run_chain: non-finite initialization, offending "
                    "component: ") +
        bad);
  }
  ChainOutput out;
  out.accept_counts.assign(static_cast<std::size_t>(n_mh_blocks), 0);
  out.proposal_counts.assign(static_cast<std::size_t>(n_mh_blocks), 0);
  out.log_posterior_trace.reserve(static_cast<std::size_t>(config.n_iter));
  out.draws.reserve(static_cast<std::size_t>(config.retained()));
  const Index burn = config.burn_in();
  for (Index s = 0; s < config.n_iter; ++s) {
    sweep(state, design, rng, out);
    out.log_posterior_trace.push_back(
        log_unnorm_posterior(state, design, data, priors, spec));
    if (s >= burn && (s - burn + 1) % config.thin == 0) {
      out.draws.push_back(state);
      out.draw_iterations.push_back(s);
    }
  }
  return out;
}

}  // namespace

ChainOutput run_chain(const Dataset& data, const Priors& priors,
                      const QuantileSpec& spec, const ChainConfig& config,
                      const NetworkParams& init, std::uint64_t stream_id) {
  config.validate();
  const Index k = init.hidden_nodes();
  const Index p = data.p();
  if (init.gamma.cols() != p + 1) {
    throw std::invalid_argument("run_chain: gamma width must be p+1");
  }
  if (init.beta.size() != k + 1) {
    throw std::invalid_argument("run_chain: beta length must be k+1");
  }
  if (priors.beta_mean.size() != k + 1 || priors.gamma_mean.rows() != k ||
      priors.gamma_mean.cols() != p + 1) {
    throw std::invalid_argument("run_chain: prior dimensions mismatch");
  }
  LatentState state{init.beta, init.gamma, 1.0, Vector::Ones(data.n())};
  Matrix design = design_matrix(data.x, state.gamma);
  RngStream rng(config.seed, stream_id);
  auto sweep = [&data, &priors, &spec, &config, k](LatentState& st, Matrix& dz,
                                                   RngStream& r,
                                                   ChainOutput& out) {
    st.beta = sample_beta(st, dz, data, priors, spec, r);
    for (Index j = 0; j < k; ++j) {
      out.proposal_counts[static_cast<std::size_t>(j)] += 1;
      if (mh_update_gamma_j(st, j, dz, data, priors, spec, r,
                            config.mh_step_sd)) {
        out.accept_counts[static_cast<std::size_t>(j)] += 1;
      }
    }
    st.sigma = sample_sigma(st, dz, data, priors, spec, r);
    st.v = sample_v(st, dz, data, spec, r);
  };
  return run_sweeps(data, priors, spec, config, std::move(state),
                    std::move(design), k, std::move(rng), sweep);
}

ChainOutput run_linear_gibbs(const Matrix& design, const Dataset& data,
                             const Priors& priors, const QuantileSpec& spec,
                             const ChainConfig& config, const Vector& beta_init,
                             std::uint64_t stream_id) {
  config.validate();
  if (design.rows() != data.n()) {
    throw std::invalid_argument("run_linear_gibbs: design rows must equal n");
  }
  if (beta_init.size() != design.cols() ||
      priors.beta_mean.size() != design.cols()) {
    throw std::invalid_argument(
        "run_linear_gibbs: beta/init length must match design width");
  }
  LatentState state{beta_init, Matrix::Zero(0, data.p() + 1), 1.0,
                    Vector::Ones(data.n())};
  RngStream rng(config.seed, stream_id);
  auto sweep = [&data, &priors, &spec](LatentState& st, Matrix& dz,
                                       RngStream& r, ChainOutput&) {
    st.beta = sample_beta(st, dz, data, priors, spec, r);
    st.sigma = sample_sigma(st, dz, data, priors, spec, r);
    st.v = sample_v(st, dz, data, spec, r);
  };
  return run_sweeps(data, priors, spec, config, std::move(state), design, 0,
                    std::move(rng), sweep);
}

QuantileSummary posterior_quantile_summary(const ChainOutput& output,
                                           const Matrix& x_eval) {
  const Index n_draws = static_cast<Index>(output.draws.size());
  if (n_draws < 2) {
    throw std::invalid_argument(
        "posterior_quantile_summary: needs at least 2 retained draws");
  }
  const Index m = x_eval.rows();
  Matrix preds(m, n_draws);
  for (Index d = 0; d < n_draws; ++d) {
    const LatentState& st = output.draws[static_cast<std::size_t>(d)];
    if (st.gamma.rows() == 0 && st.beta.size() == x_eval.cols() + 1) {
      preds.col(d) =
          (x_eval * st.beta.tail(x_eval.cols())).array() + st.beta(0);
    } else {
      preds.col(d) = design_matrix(x_eval, st.gamma) * st.beta;
    }
  }
  QuantileSummary summary;
  summary.mean = preds.rowwise().mean();
  summary.sd.resize(m);
  for (Index i = 0; i < m; ++i) {
    const double var =
        (preds.row(i).array() - summary.mean(i)).square().sum() /
        static_cast<double>(n_draws - 1);
    summary.sd(i) = std::sqrt(std::max(0.0, var));
  }
  return summary;
}

double acceptance_rate(const ChainOutput& output, Index j) {
  if (j < 0 || j >= static_cast<Index>(output.proposal_counts.size())) {
    throw std::invalid_argument("acceptance_rate: block index out of range");
  }
  const auto ju = static_cast<std::size_t>(j);
  if (output.proposal_counts[ju] == 0) {
    throw std::invalid_argument("acceptance_rate: no proposals recorded");
  }
  return static_cast<double>(output.accept_counts[ju]) /
         static_cast<double>(output.proposal_counts[ju]);
}

std::string acceptance_summary(const ChainOutput& output) {
  std::ostringstream os;
  os << "block acceptance rates:";
  if (output.proposal_counts.empty()) {
    os << " (no Metropolis blocks)";
  }
  for (std::size_t j = 0; j < output.proposal_counts.size(); ++j) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), " gamma_%zu=%.4f", j + 1,
                  acceptance_rate(output, static_cast<Index>(j)));
    os << buf;
  }
  os << "\n";
  return os.str();
}

void write_chain_csv(const ChainOutput& output, const std::string& path) {
  if (output.draws.empty()) {
    throw std::invalid_argument("write_chain_csv: chain has no retained draws");
  }
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("write_chain_csv: cannot open " + path);
  }
  const LatentState& first = output.draws.front();
  const Index kb = first.beta.size();
  const Index k = first.gamma.rows();
  const Index w = first.gamma.cols();
  file << "iter,sigma";
  for (Index i = 0; i < kb; ++i) file << ",beta_" << i;
  for (Index j = 0; j < k; ++j) {
    for (Index h = 0; h < w; ++h) file << ",gamma_" << (j + 1) << "_" << h;
  }
  file << ",log_post\n";
  char buf[32];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    file << ',' << buf;
  };
  for (std::size_t d = 0; d < output.draws.size(); ++d) {
    const LatentState& st = output.draws[d];
    const Index it = output.draw_iterations[d];
    file << it;
    put(st.sigma);
    for (Index i = 0; i < kb; ++i) put(st.beta(i));
    for (Index j = 0; j < k; ++j) {
      for (Index h = 0; h < w; ++h) put(st.gamma(j, h));
    }
    put(output.log_posterior_trace[static_cast<std::size_t>(it)]);
    file << '\n';
  }
  if (!file) {
    throw std::runtime_error("write_chain_csv: write failed for " + path);
  }
}

}  // namespace bqrnn
