#pragma once

#include "dsmpc/consensus.hpp"
#include "dsmpc/model.hpp"
#include "dsmpc/qp.hpp"
#include "dsmpc/synthesis.hpp"
#include "dsmpc/uncertainty.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dsmpc {

/// Variable layout: z(0..N), v(0..N-1), z_s, v_s, y_s.
struct OcpLayout {
    Index n = 0;
    Index m = 0;
    Index l = 0;
    int horizon = 0;

    Index z(int t) const { return static_cast<Index>(t) * n; }
    Index v(int t) const { return static_cast<Index>(horizon + 1) * n + static_cast<Index>(t) * m; }
    Index zs() const { return v(horizon); }
    Index vs() const { return zs() + n; }
    Index ys() const { return vs() + m; }
    Index size() const { return ys() + l; }
};

inline constexpr Index kCoordinator = -1;

/// ||G x[variables] - g||_W^2, owned by one subsystem or by whichever agent covers its support.
struct CostTerm {
    std::vector<Index> variables;
    Matrix G;
    Matrix W;
    Vector g;
    Index owner = kCoordinator;
    bool reference = false;  // g tracks y_ref
    Index reference_offset = 0;
};

struct OcpSpec {
    OcpLayout layout;
    ConicQp qp;
    std::vector<CostTerm> terms;
    double constant = 0.0;
    Vector y_ref;

    /// Row bookkeeping. Rows [0, n) pin z(0) and are bound at solve time.
    Index initial_rows = 0;
    Index terminal_row = 0;
    std::vector<Index> row_owner;        // subsystem tag, kCoordinator if none
    std::vector<Index> var_subsystem;    // subsystem each variable belongs to
    std::vector<std::vector<Index>> neighbors;

    Matrix A;
    Matrix B;
    Matrix C;
    Matrix K;
    Polytope stage0;  // Z_0 used for the Mode-1 pre-check

    Index num_subsystems() const { return static_cast<Index>(neighbors.size()); }
};

OcpSpec build_ocp(const NetworkModel& model, const TightenedSets& sets, const TerminalSet& terminal, const Matrix& P,
                  const Vector& y_ref);

/// Rewrites the reference-dependent linear term and constant.
void set_reference(OcpSpec& spec, const Vector& y_ref);
void set_initial_state(OcpSpec& spec, const Vector& z_init);

struct OcpSolution {
    Vector x;
    Vector y;
    std::vector<Vector> z;  // t = 0..N
    std::vector<Vector> v;  // t = 0..N-1
    Vector z_s;
    Vector v_s;
    Vector y_s;
    double objective = 0.0;
    SolveStatus status = SolveStatus::MaxIter;
    Residuals residuals;
    int iterations = 0;
    bool polished = false;
};

OcpSolution unpack_solution(const OcpSpec& spec, const Vector& x);

/// Full OCP objective at x, including the constant reference term.
double ocp_objective(const OcpSpec& spec, const Vector& x);

/// Largest violation of any row (interval excess or terminal quadratic minus its level) with z(0) = z_init.
double constraint_violation(const OcpSpec& spec, const Vector& x, const Vector& z_init);

/// Shifted plan: z(t+1), v(t+1) with the terminal controller appended.
Vector shift_solution(const OcpSpec& spec, const OcpSolution& previous);

/// Stage-0 pre-check used before attempting Mode 1.
bool initial_state_admissible(const OcpSpec& spec, const Vector& x, double tol = 1e-9);

/// Per-agent split of an OcpSpec for the consensus backend.
struct DistributedOcp {
    std::vector<LocalProblem> agents;
    ConsensusTopology topology;
    std::vector<std::vector<Index>> agent_rows;   // global row of each local row
    std::vector<std::vector<std::size_t>> agent_terms;
    bool has_coordinator = false;
};

DistributedOcp decompose(const OcpSpec& spec);

enum class Backend { Centralized, Distributed };

std::string_view to_string(Backend b);
Backend parse_backend(std::string_view text);

/// Keeps the solver state (factorizations, iterates) across receding-horizon solves.
class OcpSolver {
public:
    OcpSolver(OcpSpec spec, Backend backend, const SolverSettings& settings);

    void set_reference(const Vector& y_ref);
    OcpSolution solve(const Vector& z_init, const Vector* warm = nullptr);

    const OcpSpec& spec() const { return spec_; }
    Backend backend() const { return backend_; }

private:
    OcpSpec spec_;
    Backend backend_;
    std::optional<CentralizedSolver> central_;
    std::optional<ConsensusSolver> distributed_;
    DistributedOcp split_;
};

OcpSolution solve_ocp(const OcpSpec& spec, const Vector& z_init, Backend backend, const SolverSettings& settings,
                      const Vector* warm = nullptr);

/// True when a Mode-1 result must be treated as infeasible.
bool mode1_failed(const OcpSolution& sol);

/// Plain-text dump (cost, linear term, constraint matrix, bounds, ellipsoids) for external cross-checks.
std::string dump_ocp(const OcpSpec& spec);

}  // namespace dsmpc
