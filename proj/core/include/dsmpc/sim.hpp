#pragma once

#include "dsmpc/artifact.hpp"
#include "dsmpc/model.hpp"
#include "dsmpc/ocp.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace dsmpc {

struct ReferenceSegment {
    int start = 0;
    Vector y_ref;
};

struct ScenarioSpec {
    Vector x0;
    std::vector<ReferenceSegment> segments;
    int steps = 75;
    int runs = 1;
    std::uint64_t seed = 1;
    Distribution distribution = Distribution::Gaussian;
    /// Multiplies the model noise covariance in the plant only; the controller design is unchanged.
    double noise_scale = 1.0;

    void validate(const NetworkModel& model) const;
    const Vector& reference(int k) const;
    /// Step at which segment s ends: next segment's start, or `steps` for the last one.
    int segment_end(std::size_t s) const;
};

ScenarioSpec load_scenario(const std::string& text);
std::string serialize_scenario(const ScenarioSpec& scenario);

/// Per-run seed from (master seed, run index); independent of execution order.
std::uint64_t run_seed(std::uint64_t master, std::uint64_t run);

/// Gaussian w = L xi with L L^T = cov, or independent uniform on +-sqrt(3 cov_jj).
class DisturbanceSampler {
public:
    DisturbanceSampler(Distribution distribution, const Matrix& cov);

    Vector operator()(std::mt19937_64& rng) const;

private:
    Distribution distribution_;
    Matrix factor_;
    Vector half_width_;
};

Vector sample_disturbance(Distribution distribution, const Matrix& cov, std::mt19937_64& rng);

struct ClosedLoopTrace {
    std::uint64_t seed = 0;
    std::vector<Vector> x;  // k = 0..K
    std::vector<Vector> y;  // k = 0..K
    std::vector<Vector> u;  // k = 0..K-1
    std::vector<Vector> w;
    std::vector<Vector> z0;
    std::vector<int> mode;  // 1 or 2
    std::vector<SolveStatus> status;
    std::vector<double> objective;
    std::vector<char> infeasible;
    int infeasible_events = 0;
    int mode2_activations = 0;

    int steps() const { return static_cast<int>(u.size()); }
};

/// Replays the plant from x(0), u and the stored w draws.
std::vector<Vector> replay_states(const NetworkModel& model, const ClosedLoopTrace& trace);

/// Receding-horizon controller with the conditional Mode-1/Mode-2 initialization.
class TubeController {
public:
    struct Step {
        Vector u;
        Vector z0;
        int mode = 1;
        SolveStatus status = SolveStatus::Optimal;
        double objective = 0.0;
        bool infeasible = false;
    };

    TubeController(OcpSolver solver);

    Step step(const Vector& x, const Vector& y_ref);
    void reset();
    const std::optional<OcpSolution>& last() const { return last_; }

private:
    OcpSolver solver_;
    std::optional<OcpSolution> last_;
    std::optional<Vector> reference_;
};

struct SimulationOptions {
    Backend backend = Backend::Centralized;
    SolverSettings solver = default_settings();
    /// 0 uses the hardware concurrency.
    unsigned threads = 0;

    static SolverSettings default_settings();
};

/// OcpSolver for the first reference segment, ready to be copied per run.
OcpSolver make_ocp_solver(const NetworkModel& model, const SynthesisArtifacts& artifacts, const ScenarioSpec& scenario,
                          const SimulationOptions& options = {});

ClosedLoopTrace run_closed_loop(const NetworkModel& model, const SynthesisArtifacts& artifacts,
                                const ScenarioSpec& scenario, std::uint64_t seed, const SimulationOptions& options = {});

/// Same as above starting from a prepared controller (copied, so `prototype` keeps its state).
ClosedLoopTrace run_closed_loop(const NetworkModel& model, const TubeController& prototype,
                                const ScenarioSpec& scenario, std::uint64_t seed);

struct SegmentSummary {
    int start = 0;
    int end = 0;
    Vector y_ref;
    Vector mean_output;  // at `end`
    Vector std_error;
};

struct StatsReport {
    int runs = 0;
    int steps = 0;
    std::vector<Index> chance_rows;          // global state rows that carry a chance constraint
    Matrix row_satisfaction;                 // (K+1) x chance_rows
    Matrix subsystem_satisfaction;           // (K+1) x M, all chance rows of the subsystem jointly
    std::vector<double> subsystem_probability;
    Matrix mean_output;                      // (K+1) x l
    Vector tracking_error;                   // ||E y(k) - y_ref(k)||_inf
    std::vector<SegmentSummary> segments;
    int infeasible_events = 0;
    int mode2_activations = 0;
    double min_satisfaction = 1.0;
    int worst_step = 0;
    Index worst_subsystem = 0;
};

/// rate(k) = fraction of traces with row . x(k) <= offset.
Vector empirical_satisfaction(const std::vector<ClosedLoopTrace>& traces, const Vector& row, double offset);

StatsReport aggregate(const NetworkModel& model, const ScenarioSpec& scenario,
                      const std::vector<ClosedLoopTrace>& traces);

struct MonteCarloResult {
    StatsReport report;
    std::vector<ClosedLoopTrace> traces;
};

MonteCarloResult monte_carlo(const NetworkModel& model, const SynthesisArtifacts& artifacts,
                             const ScenarioSpec& scenario, const SimulationOptions& options = {});

std::string trace_csv(const ClosedLoopTrace& trace);
ClosedLoopTrace parse_trace_csv(const std::string& text, Index n, Index m, Index l);
std::string aggregate_csv(const StatsReport& report);
std::string summary_json(const StatsReport& report);

}  // namespace dsmpc
