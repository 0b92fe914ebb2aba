#pragma once

#include "bqrnn/rng.hpp"
#include "bqrnn/types.hpp"

namespace bqrnn {

double standard_normal(RngStream& rng);
double normal(RngStream& rng, double mean, double sd);

// Lower Cholesky factor computed in place; throws std::domain_error naming
// the first non-positive-definite leading minor.
struct CholeskyLower {
  Matrix l;

  // solves (L L^T) x = b
  Vector solve(const Vector& b) const;
  // solves L^T x = b
  Vector solve_lt(const Vector& b) const;
};
CholeskyLower cholesky_lower(const Matrix& a);

// Draw from N(mean, S) when is_precision is false, from N(mean, S^{-1}) when
// true. S must be symmetric positive definite; both paths factor S once and
// never form an explicit inverse.
Vector mvnormal(RngStream& rng, const Vector& mean, const Matrix& s,
                bool is_precision);

// Draw from N(P^{-1} b, P^{-1}) given a precision matrix P and linear term b.
Vector mvnormal_canonical(RngStream& rng, const Matrix& precision,
                          const Vector& linear);

// Gamma(shape, rate) by the Marsaglia-Tsang squeeze, with the power boost for
// shape < 1.
double gamma_draw(RngStream& rng, double shape, double rate);

// Density proportional to x^{-shape-1} exp(-rate/x).
double inverse_gamma(RngStream& rng, double shape, double rate);

struct GigParams {
  double nu;    // fixed at 1/2
  double rho1;  // >= 0
  double rho2;  // > 0
};

// Generalized inverse Gaussian draw with nu = 1/2 and density proportional to
// x^{-1/2} exp{-(rho1^2/x + rho2^2 x)/2}. Uses the reciprocal identity: 1/X is
// inverse Gaussian with mu = rho2/rho1, lambda = rho2^2. When rho1*rho2
// underflows, falls back to the exact Gamma(1/2, rho2^2/2) limit.
double gig_half(RngStream& rng, const GigParams& params);

}  // namespace bqrnn
