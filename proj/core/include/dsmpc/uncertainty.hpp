#pragma once

#include "dsmpc/model.hpp"

#include <string_view>
#include <vector>

namespace dsmpc {

/// Data of the neighbourhood-local covariance bound recursion.
struct BlockRecursion {
    std::vector<std::vector<Index>> neighbors;
    std::vector<Index> block_dims;
    /// Subsystem rows of A + BK restricted to neighbourhood columns (n_i x n_{N_i}).
    std::vector<Matrix> local_closed_loop;
    std::vector<Matrix> noise;

    static BlockRecursion from_model(const NetworkModel& model);
    std::size_t size() const { return block_dims.size(); }
};

struct CovarianceSchedule {
    int horizon = 0;
    std::vector<Matrix> exact;    // t = 0..N
    std::vector<Matrix> bounded;  // t = 0..N, block diagonal
    Matrix exact_steady;
    Matrix bounded_steady;
    std::vector<Matrix> input_exact;
    std::vector<Matrix> input_bounded;
    Matrix input_exact_steady;
    Matrix input_bounded_steady;
};

/// Sigma(0) = 0, Sigma(t+1) = A_K Sigma(t) A_K^T + W for t < N.
std::vector<Matrix> propagate_exact(const Matrix& a_k, const Matrix& w, int horizon);

/// Per-step lists of per-subsystem blocks, each updated from its neighbours' blocks only.
std::vector<std::vector<Matrix>> propagate_distributed(const BlockRecursion& rec, int horizon);

/// Steady-state covariance; throws NotSchurStable.
Matrix steady_state_cov(const Matrix& a_k, const Matrix& w, double tol = 1e-10);

/// Fixed point of the neighbourhood bound recursion; throws DistributedBoundDiverges.
std::vector<Matrix> steady_state_cov_distributed(const BlockRecursion& rec, double tol = 1e-10);

Matrix assemble_blocks(const std::vector<Matrix>& blocks);

double chebyshev_gamma(Index n, double p);
double gaussian_gamma(Index n, double p);

struct PrsBox {
    Vector radii;
};

/// r_j = sqrt(gamma * Sigma_jj); throws NegativeDiagonal.
PrsBox prs_box(const Matrix& sigma, double gamma);

/// Pontryagin difference of a polytope and a box: h'_j = h_j - sum_i |H_ji| r_i.
/// Throws EmptyTightenedSet when the result has no point.
Polytope tighten(const Polytope& set, const PrsBox& box);

enum class GammaPolicy { Global, PerConstraint };

std::string_view to_string(GammaPolicy policy);
GammaPolicy parse_gamma_policy(std::string_view text);

struct TightenedSets {
    std::vector<Polytope> state;  // Z_t, t = 0..N-1
    std::vector<Polytope> input;  // V_t, t = 0..N-1
    Polytope state_terminal;      // Z_f
    Polytope input_terminal;      // V_f
    Vector state_gamma;           // per global state row (0 for nominal rows)
    Vector input_gamma;
};

CovarianceSchedule build_covariance_schedule(const NetworkModel& model, double tol = 1e-10);

/// gamma for every global row of the state (or input) polytope under `policy`.
Vector row_gammas(const NetworkModel& model, bool state_rows, GammaPolicy policy);

TightenedSets build_tightened_sets(const NetworkModel& model, const CovarianceSchedule& schedule, GammaPolicy policy);

}  // namespace dsmpc
