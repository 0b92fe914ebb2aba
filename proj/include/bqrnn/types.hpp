#pragma once

#include <Eigen/Dense>

namespace bqrnn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace bqrnn
