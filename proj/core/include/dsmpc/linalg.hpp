#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace dsmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double max_abs(const Matrix& m);

/// Smallest eigenvalue of the symmetric part of `m`.
double min_eigenvalue(const Matrix& m);

/// Largest eigenvalue modulus of a square matrix.
double spectral_radius_of(const Matrix& m);

Matrix block_diagonal(std::span<const Matrix> blocks);

/// Result of iterating X <- A X A^T + W to its fixed point.
struct SteinSolution {
    Matrix value;
    double residual = 0.0;  // max-norm of A X A^T + W - X
    int iterations = 0;
    bool converged = false;
};

/// Solves X = A X A^T + W by the squaring (doubling) iteration. A must be Schur stable.
SteinSolution solve_stein(const Matrix& a, const Matrix& w, double tol, int max_iterations);

}  // namespace dsmpc
