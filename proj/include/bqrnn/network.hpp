#pragma once

#include "bqrnn/types.hpp"

namespace bqrnn {

// Single-hidden-layer feedforward weights. beta holds the output intercept
// followed by the k hidden-to-output weights; gamma row j holds the hidden
// bias gamma_j0 followed by the p input weights of unit j. The flat layout
// used for optimization and serialization is beta first, then gamma row-major.
struct NetworkParams {
  Vector beta;   // (k+1)
  Matrix gamma;  // k x (p+1)

  Index hidden_nodes() const { return gamma.rows(); }
  Index input_dim() const { return gamma.cols() - 1; }
};

// Numerically stable 1 / (1 + exp(-z)).
double logistic(double z);

// n x (k+1) hidden design: a leading ones column, then column j+1 holding
// logistic(gamma_j0 + x_i . gamma_j) for every row i.
Matrix design_matrix(const Matrix& x, const Matrix& gamma);

// Hidden column of a single unit, for incremental column refresh.
Vector design_column(const Matrix& x, const Vector& gamma_row);

// Network output at a single input point.
double forward(const NetworkParams& params, const Vector& x);

Vector flatten(const NetworkParams& params);
NetworkParams unflatten(const Vector& theta, Index k, Index p);

}  // namespace bqrnn
