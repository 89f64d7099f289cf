#pragma once

#include "dsmpc/qp.hpp"

#include <utility>
#include <vector>

namespace dsmpc {

/// One agent's share of a separable conic QP over its local copy of some global variables.
struct LocalProblem {
    ConicQp qp;
    /// Global index of every local variable, strictly increasing.
    std::vector<Index> variables;
};

struct ConsensusTopology {
    Index num_variables = 0;
    std::vector<std::vector<Index>> local_variables;
    /// Agent owning each global variable; every variable has exactly one owner, who holds a copy.
    std::vector<int> owner;
    /// Unordered agent pairs sharing at least one variable (i < j).
    std::vector<std::pair<int, int>> edges;

    /// Derives the edge list from the local index sets.
    static ConsensusTopology build(Index num_variables, std::vector<std::vector<Index>> local_variables,
                                   std::vector<int> owner);
    /// Throws TopologyMismatch when the sharing pattern is inconsistent or uses an
    /// edge absent from `allowed` (agent adjacency lists; empty means no restriction).
    void validate(const std::vector<std::vector<int>>& allowed = {}) const;
    std::size_t num_agents() const { return local_variables.size(); }
};

struct DistributedResult {
    Vector x;                      // consensus value of the global variables
    std::vector<Vector> duals;     // per agent, for its local rows
    SolveStatus status = SolveStatus::MaxIter;
    int iterations = 0;
    double primal_residual = 0.0;  // max over agents of row and consensus violations
    double dual_residual = 0.0;
};

/// Consensus ADMM: each agent solves a local problem with a factor-once linear system,
/// shared variables are averaged over their holders, then local duals are updated.
class ConsensusSolver {
public:
    ConsensusSolver(std::vector<LocalProblem> agents, ConsensusTopology topology, SolverSettings settings);

    void update_bounds(std::size_t agent, const Vector& lower, const Vector& upper);
    void update_linear(std::size_t agent, const Vector& linear);
    void warm_start(const Vector& x);

    DistributedResult solve();

    const std::vector<LocalProblem>& agents() const { return agents_; }
    const ConsensusTopology& topology() const { return topology_; }

private:
    struct Agent {
        Vector d;  // variable scaling (shared values)
        Vector e;  // row scaling
        Matrix p;
        Matrix a;
        Vector q;
        Vector l;
        Vector u;
        std::vector<EllipsoidProjector> projectors;
        std::vector<char> in_ellipsoid;
        Vector rho_rows;
        Eigen::LLT<Matrix> kkt;
        Vector x;       // local primal
        Vector s;       // row slack
        Vector y;       // row dual
        Vector lambda;  // consensus dual
    };

    void scale();
    void build_rho(Agent& ag, const ConicQp& qp) const;
    void factorize(Agent& ag) const;
    Vector project(const Agent& ag, std::size_t index, const Vector& v) const;

    std::vector<LocalProblem> agents_;
    ConsensusTopology topology_;
    SolverSettings settings_;
    std::vector<Agent> work_;
    Vector d_global_;
    Vector holders_;
    double c_ = 1.0;
    double rho_ = 1.0;
    Vector xbar_;  // scaled consensus value
    bool has_iterate_ = false;
};

DistributedResult solve_distributed(std::vector<LocalProblem> agents, ConsensusTopology topology,
                                    const SolverSettings& settings);

}  // namespace dsmpc
