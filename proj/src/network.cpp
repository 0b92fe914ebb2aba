#include "bqrnn/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bqrnn {

double logistic(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void check_gamma_width(Index x_cols, Index gamma_cols, const char* where) {
  if (gamma_cols != x_cols + 1) {
    throw std::invalid_argument(
        std::string(where) + ": gamma needs " + std::to_string(x_cols + 1) +
        " columns (bias plus input weights), got " + std::to_string(gamma_cols));
  }
}

}  // namespace

Matrix design_matrix(const Matrix& x, const Matrix& gamma) {
  check_gamma_width(x.cols(), gamma.cols(), "design_matrix");
  const Index n = x.rows();
  const Index k = gamma.rows();
  Matrix l(n, k + 1);
  l.col(0).setOnes();
  if (k > 0) {
    Matrix z = x * gamma.rightCols(x.cols()).transpose();
    z.rowwise() += gamma.col(0).transpose();
    l.rightCols(k) = z.unaryExpr([](double t) { return logistic(t); });
  }
  return l;
}

Vector design_column(const Matrix& x, const Vector& gamma_row) {
  check_gamma_width(x.cols(), gamma_row.size(), "design_column");
  Vector z = x * gamma_row.tail(x.cols());
  z.array() += gamma_row(0);
  return z.unaryExpr([](double t) { return logistic(t); });
}

double forward(const NetworkParams& params, const Vector& x) {
  check_gamma_width(x.size(), params.gamma.cols(), "forward");
  if (params.beta.size() != params.gamma.rows() + 1) {
    throw std::invalid_argument("forward: beta length must be k+1");
  }
  double out = params.beta(0);
  for (Index j = 0; j < params.gamma.rows(); ++j) {
    const double z = params.gamma(j, 0) + params.gamma.row(j).tail(x.size()).dot(x);
    out += params.beta(j + 1) * logistic(z);
  }
  return out;
}

Vector flatten(const NetworkParams& params) {
  const Index k = params.gamma.rows();
  const Index w = params.gamma.cols();
  Vector theta(params.beta.size() + k * w);
  theta.head(params.beta.size()) = params.beta;
  for (Index j = 0; j < k; ++j) {
    theta.segment(params.beta.size() + j * w, w) =
        params.gamma.row(j).transpose();
  }
  return theta;
}

NetworkParams unflatten(const Vector& theta, Index k, Index p) {
  const Index expect = (k + 1) + k * (p + 1);
  if (theta.size() != expect) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(expect) +
                                " parameters, got " + std::to_string(theta.size()));
  }
  NetworkParams params;
  params.beta = theta.head(k + 1);
  params.gamma.resize(k, p + 1);
  for (Index j = 0; j < k; ++j) {
    params.gamma.row(j) =
        theta.segment(k + 1 + j * (p + 1), p + 1).transpose();
  }
  return params;
}

}  // namespace bqrnn
