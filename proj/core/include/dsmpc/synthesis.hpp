#pragma once

#include "dsmpc/model.hpp"
#include "dsmpc/qp.hpp"
#include "dsmpc/uncertainty.hpp"

#include <optional>
#include <vector>

namespace dsmpc {

struct LyapunovCost {
    Matrix P;
    double residual = 0.0;
    /// Share of the squared Frobenius norm of P outside its subsystem diagonal blocks.
    double off_block_mass = 0.0;
};

/// P = A_K^T P A_K + Q + K^T R K; throws NotSchurStable.
LyapunovCost solve_lyapunov_cost(const Matrix& a_k, const Matrix& q, const Matrix& r, const Matrix& k,
                                 double tol = 1e-10);

double off_block_mass(const Matrix& p, const std::vector<Index>& block_dims);

enum class TerminalShape {
    Identity,  // P_z = I, P_v = I
    Box,       // P_z, P_v = diag(1 / half-width^2) of Z_f, V_f
};

/// {alpha = (dz, z_s, v_s) : alpha^T shape alpha <= 1} with shape = blockdiag(P_f, P_z, P_v) / lambda^2.
struct TerminalSet {
    Index n = 0;
    Index m = 0;
    Matrix p_f;
    Matrix p_z;
    Matrix p_v;
    double lambda = 1.0;
    Matrix shape;
    /// min eigenvalue of P_tr - A_cl^T P_tr A_cl before scaling.
    double invariance_margin = 0.0;
    /// min over constraint rows of offset minus support of the level set.
    double admissibility_margin = 0.0;
    /// Per-subsystem level split reported for the separable form; both solver
    /// backends enforce the coupled sum.
    std::vector<double> levels;

    double value(const Vector& alpha) const { return alpha.dot(shape * alpha); }
    /// Lower-right (z_s, v_s) block, the steady-state slice of the set.
    Matrix slice() const { return shape.bottomRightCorner(n + m, n + m); }
};

/// Augmented closed loop (dz, z_s, v_s) -> (A_K dz, z_s, v_s).
Matrix augmented_closed_loop(const Matrix& a_k, Index m);

/// Calibrates the largest admissible level set of blockdiag(p_f, p_z, p_v).
TerminalSet build_terminal_set(const Matrix& a_k, const Matrix& k, const Matrix& p_f, const Matrix& p_z,
                               const Matrix& p_v, const Polytope& z_f, const Polytope& v_f);

TerminalSet build_terminal_set(const NetworkModel& model, const Matrix& p_f, const TightenedSets& sets,
                               TerminalShape shape = TerminalShape::Box);

struct SteadyStateOracle {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix T;
    Polytope z_f;
    Polytope v_f;
    /// When set, (z_s, v_s) must also lie in {s : s^T slice s <= 1}.
    std::optional<Matrix> slice;
    bool full_row_rank = true;
};

SteadyStateOracle make_steady_state_oracle(const NetworkModel& model, const TightenedSets& sets,
                                           const TerminalSet* terminal);

struct SteadyState {
    Vector z_s;
    Vector v_s;
    Vector y_s;
    double cost = 0.0;  // ||y_s - y_ref||_T^2
};

/// argmin ||C z_s - y_ref||_T^2 over admissible steady states; throws InfeasibleSteadyStateSet.
SteadyState admissible_steady_state(const Vector& y_ref, const SteadyStateOracle& oracle);

}  // namespace dsmpc
