#pragma once

#include "dsmpc/linalg.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace dsmpc {

/// {x : H x <= h}.
struct Polytope {
    Matrix H;
    Vector h;

    Index dim() const { return H.cols(); }
    Index rows() const { return H.rows(); }
    /// Throws DimensionMismatch on inconsistent sizes or an all-zero row.
    void validate(std::string_view module, std::string_view what) const;
    bool contains(const Vector& x, double tol = 0.0) const;
};

enum class Distribution { Gaussian, Uniform };

std::string_view to_string(Distribution d);
Distribution parse_distribution(std::string_view text);

struct SubsystemSpec {
    Index state_dim = 0;
    Index input_dim = 0;
    Index output_dim = 0;
    /// Sorted neighbourhood, always containing the subsystem itself.
    std::vector<Index> neighbors;
    /// A_ij and C_ij, parallel to `neighbors`.
    std::vector<Matrix> a_blocks;
    std::vector<Matrix> c_blocks;
    Matrix b;
    Matrix noise_cov;
    /// Chance constraint over the stacked neighbourhood state (neighbour order).
    Polytope state_set;
    /// Rows that constrain only the nominal state and are never tightened.
    std::vector<bool> state_nominal;
    Polytope input_set;
    std::vector<bool> input_nominal;
    double p_x = 0.5;
    double p_u = 0.5;
    Matrix q;
    Matrix r;
    Matrix t;
    /// K_{N_i}; absent means the dense LQR helper supplies it.
    std::optional<Matrix> gain;
};

/// Per-subsystem specification plus global assembly.
struct NetworkModel {
    std::vector<SubsystemSpec> subsystems;
    int horizon = 1;
    Distribution distribution = Distribution::Gaussian;

    Index n = 0;
    Index m = 0;
    Index l = 0;
    std::vector<Index> state_offset;
    std::vector<Index> input_offset;
    std::vector<Index> output_offset;
    /// x_{N_i} = selectors[i] * x.
    std::vector<Matrix> selectors;

    Matrix A;
    Matrix B;
    Matrix C;
    Matrix noise_cov;
    Matrix K;
    Matrix Q;
    Matrix R;
    Matrix T;
    bool gain_from_lqr = false;

    /// Global polytopes with each local row lifted by its selector.
    Polytope state_set;
    Polytope input_set;
    std::vector<Index> state_row_owner;
    std::vector<Index> input_row_owner;
    std::vector<bool> state_row_nominal;
    std::vector<bool> input_row_nominal;

    Index num_subsystems() const { return static_cast<Index>(subsystems.size()); }
    Matrix closed_loop() const { return A + B * K; }
    Index neighborhood_dim(Index i) const { return selectors[static_cast<std::size_t>(i)].rows(); }
    /// Rows of A + BK belonging to subsystem i, restricted to the neighbourhood columns.
    Matrix local_closed_loop(Index i) const;
    /// Subsystem owning global state coordinate j.
    Index state_owner(Index j) const;
};

inline constexpr double kStabilityMargin = 1e-9;

/// Largest eigenvalue modulus; throws NonSquare.
double spectral_radius(const Matrix& m);

struct LqrResult {
    Matrix K;
    Matrix P;
    int iterations = 0;
};

/// Dense discrete LQR by Riccati iteration; u = K x.
LqrResult lqr_gain(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                   int max_iterations = 100000);

/// Validates the specs, assembles global matrices and checks the structural
/// assumptions (bidirectional graph, PD noise, stable closed loop, bounded sets).
NetworkModel assemble_network(std::vector<SubsystemSpec> subsystems, int horizon, Distribution distribution);

/// Throws UnboundedConstraintSet naming the first coordinate without finite support.
void check_bounded(const Polytope& set, std::string_view what);

}  // namespace dsmpc
