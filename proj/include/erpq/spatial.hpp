#pragma once

#include <Eigen/Core>

#include "erpq/synthdata.hpp"

namespace erpq {

struct SpatialFilterBank {
  Eigen::MatrixXd weights;              // n_filters x channels
  Eigen::VectorXd rayleigh_quotients;   // non-increasing
};

struct XdawnCovariances {
  Eigen::MatrixXd signal;  // evoked covariance, ridge included
  Eigen::MatrixXd noise;   // total covariance, ridge included
};

// Per-epoch covariance estimates used by fit_xdawn, exposed for checking the
// filters' generalized Rayleigh quotients and metric-orthonormality.
XdawnCovariances xdawn_covariances(const EpochSet& train);

// Generalized eigenvectors of (signal, noise): Cholesky whitening of the
// noise covariance then a cyclic Jacobi eigensolve. Filters come out sorted
// by descending quotient, scaled to w' * noise * w = 1, largest-magnitude
// coefficient positive.
SpatialFilterBank fit_xdawn(const EpochSet& train, int n_filters = 8);

// Flattened projection, filter-major: out[f * samples + t].
Eigen::VectorXd apply_filters(const SpatialFilterBank& bank, const Epoch& epoch);

// One column per epoch, rows = n_filters * samples.
Eigen::MatrixXd feature_matrix(const SpatialFilterBank& bank, const EpochSet& set);

// Cyclic Jacobi for symmetric A; eigenvalues ascending, eigenvectors in the
// matching columns. Sweeps until the off-diagonal Frobenius norm drops below
// 1e-12 times the Frobenius norm of A.
void jacobi_eigh(Eigen::MatrixXd a, Eigen::VectorXd& eigenvalues,
                 Eigen::MatrixXd& eigenvectors);

}  // namespace erpq
