#include "dsmpc/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace dsmpc {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double min_eigenvalue(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

double spectral_radius_of(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> eig(m, false);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix block_diagonal(std::span<const Matrix> blocks) {
    Index rows = 0, cols = 0;
    for (const auto& b : blocks) {
        rows += b.rows();
        cols += b.cols();
    }
    Matrix out = Matrix::Zero(rows, cols);
    Index r = 0, c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

SteinSolution solve_stein(const Matrix& a, const Matrix& w, double tol, int max_iterations) {
    // X_{k+1} = X_k + A_k X_k A_k^T, A_{k+1} = A_k^2 doubles the number of summed terms.
    SteinSolution out;
    Matrix x = symmetrized(w);
    Matrix ak = a;
    auto residual = [&](const Matrix& xv) { return max_abs(a * xv * a.transpose() + w - xv); };
    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        Matrix next = symmetrized(x + ak * x * ak.transpose());
        ak = (ak * ak).eval();
        const double step = max_abs(next - x);
        x = std::move(next);
        if (step <= tol * std::max(1.0, max_abs(x)) || max_abs(ak) == 0.0) {
            out.residual = residual(x);
            if (out.residual <= tol) {
                out.converged = true;
                break;
            }
        }
        if (!std::isfinite(max_abs(x))) break;
    }
    // A few plain fixed-point sweeps polish the residual left by the doubling rounding.
    for (int polish = 0; polish < 4 && std::isfinite(max_abs(x)); ++polish) {
        out.residual = residual(x);
        if (out.residual <= 0.1 * tol) break;
        x = symmetrized(a * x * a.transpose() + w);
    }
    out.residual = residual(x);
    out.converged = std::isfinite(out.residual) && out.residual <= tol;
    out.value = std::move(x);
    return out;
}

}  // namespace dsmpc
