#include "checks.hpp"

#include "dsmpc/error.hpp"
#include "dsmpc/model_io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <sstream>

namespace dsmpc::cli {
namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

CheckResult guarded(const std::string& name, const std::function<CheckResult()>& body) {
    try {
        CheckResult r = body();
        r.name = name;
        return r;
    } catch (const Error& e) {
        return {name, false, std::string(to_string(e.code())) + ": " + e.what()};
    } catch (const std::exception& e) {
        return {name, false, e.what()};
    }
}

CheckResult verdict(bool passed, const std::string& detail) { return {"", passed, detail}; }

// Coordinates touched by the chance rows of subsystem i and the gamma used for them.
std::vector<Index> chance_coordinates(const NetworkModel& model, const SynthesisArtifacts& a, Index i, double& gamma) {
    std::vector<Index> coords;
    gamma = 0.0;
    for (Index j = 0; j < model.state_set.rows(); ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (model.state_row_owner[js] != i || model.state_row_nominal[js]) continue;
        gamma = std::max(gamma, a.sets.state_gamma(j));
        for (Index c = 0; c < model.n; ++c) {
            if (model.state_set.H(j, c) != 0.0 && std::find(coords.begin(), coords.end(), c) == coords.end()) {
                coords.push_back(c);
            }
        }
    }
    return coords;
}

}  // namespace

std::vector<CheckResult> run_checks(const NetworkModel& model, const SynthesisArtifacts& a, const ScenarioSpec& scenario,
                                    const CheckOptions& options) {
    std::vector<CheckResult> out;
    const Matrix a_k = model.closed_loop();
    const CovarianceSchedule& sched = a.schedule;

    out.push_back(guarded("model: canonical serialization round trip", [&] {
        const std::string h1 = model_hash(model);
        const std::string h2 = model_hash(load_network(serialize_network(model)));
        return verdict(h1 == h2, h1 + " vs " + h2);
    }));
    out.push_back(guarded("model: closed loop Schur stable", [&] {
        const double rho = spectral_radius(a_k);
        return verdict(rho < 1.0, "spectral radius " + fmt(rho));
    }));
    out.push_back(guarded("uncertainty: steady-state covariance residual <= 1e-10", [&] {
        const double res = max_abs(a_k * sched.exact_steady * a_k.transpose() + model.noise_cov - sched.exact_steady);
        return verdict(res <= 1e-10, "residual " + fmt(res));
    }));
    out.push_back(guarded("uncertainty: bound dominates exact covariance", [&] {
        double worst = min_eigenvalue(sched.bounded_steady - sched.exact_steady);
        for (std::size_t t = 0; t < sched.exact.size(); ++t) {
            worst = std::min(worst, min_eigenvalue(sched.bounded[t] - sched.exact[t]));
        }
        return verdict(worst >= -1e-9, "min eigenvalue " + fmt(worst));
    }));
    out.push_back(guarded("uncertainty: PRS radii nested in t", [&] {
        double worst = 0.0;
        for (std::size_t t = 0; t + 1 < sched.bounded.size(); ++t) {
            worst = std::max(worst, (sched.bounded[t].diagonal() - sched.bounded[t + 1].diagonal()).maxCoeff());
            worst = std::max(worst, (sched.bounded[t + 1].diagonal() - sched.bounded_steady.diagonal()).maxCoeff());
        }
        return verdict(worst <= 1e-12, "largest decrease " + fmt(worst));
    }));
    out.push_back(guarded("uncertainty: empirical t-step PRS coverage", [&] {
        std::mt19937_64 rng(run_seed(options.seed, 0xC0FFEE));
        const DisturbanceSampler sampler(model.distribution, model.noise_cov);
        const auto N = static_cast<std::size_t>(model.horizon);
        std::vector<std::vector<int>> hits(N + 1, std::vector<int>(model.subsystems.size(), 0));
        std::vector<std::vector<Index>> coords(model.subsystems.size());
        std::vector<double> gammas(model.subsystems.size());
        for (std::size_t i = 0; i < coords.size(); ++i) {
            coords[i] = chance_coordinates(model, a, static_cast<Index>(i), gammas[i]);
        }
        for (int s = 0; s < options.coverage_samples; ++s) {
            Vector e = Vector::Zero(model.n);
            for (std::size_t t = 1; t <= N; ++t) {
                e = a_k * e + sampler(rng);
                for (std::size_t i = 0; i < coords.size(); ++i) {
                    bool inside = true;
                    for (Index c : coords[i]) inside = inside && std::abs(e(c)) <= std::sqrt(gammas[i] * sched.bounded[t](c, c));
                    hits[t][i] += inside ? 1 : 0;
                }
            }
        }
        double worst = 1.0;
        bool ok = true;
        for (std::size_t t = 1; t <= N; ++t) {
            for (std::size_t i = 0; i < coords.size(); ++i) {
                if (coords[i].empty()) continue;
                const double rate = hits[t][i] / static_cast<double>(options.coverage_samples);
                worst = std::min(worst, rate - model.subsystems[i].p_x);
                ok = ok && rate >= model.subsystems[i].p_x - 0.01;
            }
        }
        return verdict(ok, "worst coverage minus p " + fmt(worst));
    }));
    out.push_back(guarded("synthesis: Lyapunov residual <= 1e-8", [&] {
        return verdict(a.cost.residual <= 1e-8, "residual " + fmt(a.cost.residual));
    }));
    out.push_back(guarded("synthesis: terminal invariance certificate", [&] {
        return verdict(a.terminal.invariance_margin >= -1e-9, "margin " + fmt(a.terminal.invariance_margin));
    }));
    out.push_back(guarded("synthesis: terminal set admissible and invariant on its boundary", [&] {
        const TerminalSet& ts = a.terminal;
        const Index n = ts.n, m = ts.m;
        const Matrix a_cl = augmented_closed_loop(a_k, m);
        std::mt19937_64 rng(run_seed(options.seed, 0xB0B));
        std::normal_distribution<double> normal;
        double worst_row = -kInf, worst_decrease = -kInf;
        for (int s = 0; s < options.boundary_samples; ++s) {
            Vector alpha(2 * n + m);
            for (Index j = 0; j < alpha.size(); ++j) alpha(j) = normal(rng);
            alpha /= std::sqrt(ts.value(alpha));
            const Vector z = alpha.head(n) + alpha.segment(n, n);
            const Vector v = model.K * alpha.head(n) + alpha.tail(m);
            worst_row = std::max(worst_row, (a.sets.state_terminal.H * z - a.sets.state_terminal.h).maxCoeff());
            if (a.sets.input_terminal.rows() > 0) {
                worst_row = std::max(worst_row, (a.sets.input_terminal.H * v - a.sets.input_terminal.h).maxCoeff());
            }
            worst_decrease = std::max(worst_decrease, ts.value(a_cl * alpha) - ts.value(alpha));
        }
        return verdict(worst_row <= 1e-9 && worst_decrease <= 1e-9,
                       "max row excess " + fmt(worst_row) + ", max level increase " + fmt(worst_decrease));
    }));
    out.push_back(guarded("solver: centralized and distributed agree at k=0", [&] {
        SolverSettings tight;
        tight.eps_abs = 1e-9;
        tight.eps_rel = 1e-9;
        tight.max_iterations = 200000;
        const OcpSpec spec =
            build_ocp(model, a.sets, a.terminal, a.cost.P, scenario.segments.front().y_ref);
        const OcpSolution c = solve_ocp(spec, scenario.x0, Backend::Centralized, tight);
        const OcpSolution d = solve_ocp(spec, scenario.x0, Backend::Distributed, tight);
        const double gap = (c.x - d.x).cwiseAbs().maxCoeff();
        return verdict(gap <= 1e-4, "max-norm gap " + fmt(gap) + " (" + to_string(c.status) + ", " +
                                        to_string(d.status) + ")");
    }));

    ScenarioSpec noisy = scenario;
    noisy.runs = options.runs;
    noisy.seed = options.seed;
    std::optional<MonteCarloResult> mc;
    out.push_back(guarded("sim: identical seeds give identical reports", [&] {
        mc = monte_carlo(model, a, noisy);
        const MonteCarloResult again = monte_carlo(model, a, noisy);
        const bool same = summary_json(mc->report) == summary_json(again.report) &&
                          aggregate_csv(mc->report) == aggregate_csv(again.report);
        return verdict(same, std::to_string(noisy.runs) + " runs twice");
    }));
    out.push_back(guarded("sim: traces replay from stored disturbances", [&] {
        if (!mc) return verdict(false, "no Monte-Carlo result");
        double worst = 0.0;
        for (const auto& tr : mc->traces) {
            const auto x = replay_states(model, tr);
            for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, (x[k] - tr.x[k]).cwiseAbs().maxCoeff());
        }
        return verdict(worst <= 1e-12, "max state deviation " + fmt(worst));
    }));
    out.push_back(guarded("sim: zero infeasible events", [&] {
        if (!mc) return verdict(false, "no Monte-Carlo result");
        return verdict(mc->report.infeasible_events == 0,
                       std::to_string(mc->report.infeasible_events) + " infeasible, " +
                           std::to_string(mc->report.mode2_activations) + " Mode-2 steps");
    }));
    out.push_back(guarded("sim: per-step chance constraint satisfaction", [&] {
        if (!mc) return verdict(false, "no Monte-Carlo result");
        const StatsReport& r = mc->report;
        bool ok = true;
        double worst = 1.0;
        for (Index i = 0; i < r.subsystem_satisfaction.cols(); ++i) {
            const double p = r.subsystem_probability[static_cast<std::size_t>(i)];
            const double floor = p - 3.0 * std::sqrt(p * (1.0 - p) / r.runs);
            const double lowest = r.subsystem_satisfaction.col(i).minCoeff();
            worst = std::min(worst, lowest);
            ok = ok && lowest >= floor;
        }
        return verdict(ok, "lowest rate " + fmt(worst));
    }));
    out.push_back(guarded("sim: zero-noise objective nonincreasing within segments", [&] {
        ScenarioSpec quiet = scenario;
        quiet.noise_scale = 0.0;
        const ClosedLoopTrace tr = run_closed_loop(model, a, quiet, 0);
        double worst = -kInf;
        for (int k = 1; k < tr.steps(); ++k) {
            const Vector& r0 = quiet.reference(k - 1);
            if (quiet.reference(k) != r0) continue;
            worst = std::max(worst, tr.objective[static_cast<std::size_t>(k)] - tr.objective[static_cast<std::size_t>(k - 1)]);
        }
        return verdict(worst <= 1e-7, "largest increase " + fmt(worst));
    }));
    return out;
}

}  // namespace dsmpc::cli
