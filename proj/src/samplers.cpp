#include "bqrnn/samplers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bqrnn {

double standard_normal(RngStream& rng) {
  const double u1 = rng.next_unit();
  const double u2 = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double normal(RngStream& rng, double mean, double sd) {
  if (!(sd > 0.0)) {
    throw std::domain_error("normal: sd must be positive, got " +
                            std::to_string(sd));
  }
  return mean + sd * standard_normal(rng);
}

Vector CholeskyLower::solve(const Vector& b) const {
  Vector w = l.triangularView<Eigen::Lower>().solve(b);
  return l.transpose().triangularView<Eigen::Upper>().solve(w);
}

Vector CholeskyLower::solve_lt(const Vector& b) const {
  return l.transpose().triangularView<Eigen::Upper>().solve(b);
}

CholeskyLower cholesky_lower(const Matrix& a) {
  const Index m = a.rows();
  if (a.cols() != m) {
    throw std::invalid_argument("cholesky_lower: matrix must be square");
  }
  Matrix l = Matrix::Zero(m, m);
  for (Index j = 0; j < m; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) {
      throw std::domain_error(
          "cholesky_lower: matrix is not positive definite (leading minor " +
          std::to_string(j + 1) + " fails)");
    }
    d = std::sqrt(d);
    l(j, j) = d;
    for (Index i = j + 1; i < m; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d;
    }
  }
  return {std::move(l)};
}

namespace {

Vector standard_normal_vector(RngStream& rng, Index m) {
  Vector z(m);
  for (Index i = 0; i < m; ++i) z(i) = standard_normal(rng);
  return z;
}

}  // namespace

Vector mvnormal(RngStream& rng, const Vector& mean, const Matrix& s,
                bool is_precision) {
  if (s.rows() != mean.size() || s.cols() != mean.size()) {
    throw std::invalid_argument("mvnormal: dimension mismatch");
  }
  const CholeskyLower chol = cholesky_lower(s);
  const Vector z = standard_normal_vector(rng, mean.size());
  if (is_precision) {
    return mean + chol.solve_lt(z);
  }
  return mean + chol.l * z;
}

Vector mvnormal_canonical(RngStream& rng, const Matrix& precision,
                          const Vector& linear) {
  if (precision.rows() != linear.size() || precision.cols() != linear.size()) {
    throw std::invalid_argument("mvnormal_canonical: dimension mismatch");
  }
  const CholeskyLower chol = cholesky_lower(precision);
  const Vector mean = chol.solve(linear);
  const Vector z = standard_normal_vector(rng, linear.size());
  return mean + chol.solve_lt(z);
}

double gamma_draw(RngStream& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw std::domain_error("gamma_draw: shape and rate must be positive");
  }
  if (shape < 1.0) {
    const double g = gamma_draw(rng, shape + 1.0, 1.0);
    const double u = rng.next_unit();
    return g * std::pow(u, 1.0 / shape) / rate;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = standard_normal(rng);
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = rng.next_unit();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return d * v / rate;
    }
  }
}

double inverse_gamma(RngStream& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw std::domain_error("inverse_gamma: shape and rate must be positive");
  }
  return 1.0 / gamma_draw(rng, shape, rate);
}

namespace {

// Michael-Schucany-Haas transform with rejection; the smaller quadratic root
// is evaluated in its cancellation-free form.
double inverse_gaussian(RngStream& rng, double mu, double lambda) {
  const double z = standard_normal(rng);
  const double t = mu * z * z / lambda;
  const double x_small =
      mu / (1.0 + 0.5 * t + std::sqrt(t * (1.0 + 0.25 * t)));
  const double u = rng.next_unit();
  return (u <= mu / (mu + x_small)) ? x_small : mu * mu / x_small;
}

}  // namespace

double gig_half(RngStream& rng, const GigParams& params) {
  if (params.nu != 0.5) {
    throw std::invalid_argument("gig_half: only nu = 1/2 is supported");
  }
  if (!(params.rho2 > 0.0)) {
    throw std::domain_error("gig_half: rho2 must be positive");
  }
  if (!(params.rho1 >= 0.0)) {
    throw std::domain_error("gig_half: rho1 must be nonnegative");
  }
  if (params.rho1 * params.rho2 < 1e-10) {
    return gamma_draw(rng, 0.5, 0.5 * params.rho2 * params.rho2);
  }
  const double mu = params.rho2 / params.rho1;
  const double lambda = params.rho2 * params.rho2;
  return 1.0 / inverse_gaussian(rng, mu, lambda);
}

}  // namespace bqrnn
