// Dense symmetric eigensolver: Householder tridiagonalization followed by
// the implicit-shift QL iteration, with accumulated eigenvectors.
#pragma once

#include <Eigen/Dense>

namespace mpopf {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k pairs with values[k], orthonormal
};

// Full decomposition of a symmetric matrix. The input is symmetrized as
// (M + M^T)/2; gross asymmetry throws std::invalid_argument.
SymmetricEigen eigh(const Eigen::MatrixXd& m);

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd vector;  // unit norm
};

// Smallest eigenvalue and a unit eigenvector, residual |Mv - lambda v| <= tol.
EigenPair min_eigenpair(const Eigen::MatrixXd& m, double tol = 1e-8);

}  // namespace mpopf
