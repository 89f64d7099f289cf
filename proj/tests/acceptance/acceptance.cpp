#include "dsmpc/artifact.hpp"
#include "dsmpc/chi_squared.hpp"
#include "dsmpc/model_io.hpp"
#include "dsmpc/ocp.hpp"
#include "dsmpc/sim.hpp"

#include "../support/random_problems.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

namespace {

using namespace dsmpc;

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string vec(const Vector& v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << '[';
    for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
    os << ']';
    return os.str();
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

SolverSettings tight() {
    SolverSettings s;
    s.eps_abs = 1e-9;
    s.eps_rel = 1e-9;
    s.max_iterations = 200000;
    return s;
}

struct Context {
    NetworkModel model;
    SynthesisArtifacts art;
    ScenarioSpec scenario;
    MonteCarloResult nominal;
};

Outcome chance_constraints(const Context& c) {
    const StatsReport& r = c.nominal.report;
    const double lowest = r.subsystem_satisfaction.minCoeff();
    const bool ok = lowest >= 0.75 && lowest <= 0.95;
    return {ok, "min over k and subsystems of P(|x_i2| <= 1) = " + num(lowest) + " at k = " + std::to_string(r.worst_step) +
                    ", subsystem " + std::to_string(r.worst_subsystem + 1) + " (need >= 0.70 and in [0.75, 0.95]; " +
                    std::to_string(r.runs) + " runs)"};
}

Outcome unreachable_reference(const Context& c) {
    const SegmentSummary& seg = c.nominal.report.segments.at(1);
    const SteadyState tracked =
        admissible_steady_state(seg.y_ref, make_steady_state_oracle(c.model, c.art.sets, &c.art.terminal));
    const SteadyState relaxed = admissible_steady_state(seg.y_ref, make_steady_state_oracle(c.model, c.art.sets, nullptr));
    const Vector gap = (seg.mean_output - tracked.y_s).cwiseAbs();
    const bool ok = (gap.array() <= 0.05 + seg.std_error.array()).all();
    const Vector target{{-5.57, -1.45, 5.95}};
    return {ok, "mean y(" + std::to_string(seg.end) + ") " + vec(seg.mean_output) + " vs oracle " + vec(tracked.y_s) +
                    ", gap " + vec(gap) + " (tol 0.05 + SE); oracle minus target " + vec(tracked.y_s - target) +
                    ", tracking cost " + num(tracked.cost) + " (target 3451.3), polytope-only oracle " +
                    vec(relaxed.y_s)};
}

Outcome recursive_feasibility(const Context& c) {
    ScenarioSpec stress = c.scenario;
    stress.runs = 200;
    stress.seed = c.scenario.seed + 1;
    stress.noise_scale = 10.0;
    const MonteCarloResult s = monte_carlo(c.model, c.art, stress);
    const StatsReport& n = c.nominal.report;
    const bool ok = n.infeasible_events == 0 && s.report.infeasible_events == 0 && s.report.mode2_activations > 0;
    return {ok, std::to_string(n.infeasible_events) + " infeasible steps in " + std::to_string(n.runs) + "x" +
                    std::to_string(n.steps) + " (" + std::to_string(n.mode2_activations) + " Mode-2); 10x noise: " +
                    std::to_string(s.report.infeasible_events) + " infeasible in " + std::to_string(stress.runs) + "x" +
                    std::to_string(stress.steps) + ", " + std::to_string(s.report.mode2_activations) + " Mode-2 steps"};
}

Outcome admissible_tracking(const Context& c) {
    bool ok = true;
    std::string detail;
    for (std::size_t s : {std::size_t{0}, std::size_t{2}}) {
        const SegmentSummary& seg = c.nominal.report.segments.at(s);
        const double err = (seg.mean_output - seg.y_ref).cwiseAbs().maxCoeff();
        const double tol = 0.02 + 3.0 * seg.std_error.maxCoeff();
        ok = ok && err <= tol;
        detail += (detail.empty() ? "" : "; ") + std::string("segment ") + std::to_string(s + 1) + " |mean y(" +
                  std::to_string(seg.end) + ") - y_ref|_inf = " + num(err) + " (tol " + num(tol) + ")";
    }
    return {ok, detail};
}

Outcome solver_cross_validation(const Context& c) {
    const OcpSpec spec = build_ocp(c.model, c.art.sets, c.art.terminal, c.art.cost.P, c.scenario.segments[0].y_ref);
    const OcpSolution cen = solve_ocp(spec, c.scenario.x0, Backend::Centralized, tight());
    const OcpSolution dis = solve_ocp(spec, c.scenario.x0, Backend::Distributed, tight());
    const double k0_gap = (cen.x - dis.x).cwiseAbs().maxCoeff();
    bool ok = cen.status == SolveStatus::Optimal && k0_gap <= 1e-4;

    std::mt19937_64 rng(20240101);
    double random_gap = 0.0, random_obj = 0.0;
    int solved = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const test::RandomOcpInstance inst = test::random_ocp_instance(rng);
        const OcpSpec s = build_ocp(inst.model, inst.artifacts.sets, inst.artifacts.terminal, inst.artifacts.cost.P, inst.y_ref);
        const OcpSolution a = solve_ocp(s, inst.x0, Backend::Centralized, tight());
        const OcpSolution b = solve_ocp(s, inst.x0, Backend::Distributed, tight());
        solved += a.status == SolveStatus::Optimal ? 1 : 0;
        random_gap = std::max(random_gap, (a.x - b.x).cwiseAbs().maxCoeff());
        random_obj = std::max(random_obj, std::abs(a.objective - b.objective) / std::max(1.0, std::abs(a.objective)));
    }
    ok = ok && solved == 100 && random_gap <= 1e-4 && random_obj <= 1e-4;

    double kkt_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Index n = 5 + static_cast<Index>(trial % 26);
        const Index eq = trial % std::min<Index>(n / 2, 6);
        const test::PlantedQp p = test::planted_qp(rng, n, eq);
        const SolveResult r = solve_centralized(p.qp, tight());
        kkt_gap = std::max(kkt_gap, (r.x - test::kkt_oracle(p, eq)).cwiseAbs().maxCoeff());
        ok = ok && r.status == SolveStatus::Optimal;
    }
    ok = ok && kkt_gap <= 1e-6;
    return {ok, "k=0 gap " + num(k0_gap) + "; 100 random OCPs: " + std::to_string(solved) + " optimal, max gap " +
                    num(random_gap) + ", max rel objective gap " + num(random_obj) + "; 50 QPs vs dense KKT: max gap " +
                    num(kkt_gap)};
}

Outcome synthesis_residuals(const Context& c) {
    const Matrix a_k = c.model.closed_loop();
    const double lyap = max_abs(a_k.transpose() * c.art.cost.P * a_k - c.art.cost.P + c.model.Q +
                                c.model.K.transpose() * c.model.R * c.model.K);
    const Matrix& sf = c.art.schedule.exact_steady;
    const double cov = max_abs(a_k * sf * a_k.transpose() + c.model.noise_cov - sf);

    const TerminalSet& ts = c.art.terminal;
    const Matrix a_cl = augmented_closed_loop(a_k, c.model.m);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    double row_excess = -kInf, level_increase = -kInf;
    for (int s = 0; s < 1000; ++s) {
        Vector alpha(2 * c.model.n + c.model.m);
        for (Index j = 0; j < alpha.size(); ++j) alpha(j) = normal(rng);
        alpha /= std::sqrt(ts.value(alpha));
        const Vector z = alpha.head(c.model.n) + alpha.segment(c.model.n, c.model.n);
        const Vector v = c.model.K * alpha.head(c.model.n) + alpha.tail(c.model.m);
        row_excess = std::max(row_excess, (c.art.sets.state_terminal.H * z - c.art.sets.state_terminal.h).maxCoeff());
        row_excess = std::max(row_excess, (c.art.sets.input_terminal.H * v - c.art.sets.input_terminal.h).maxCoeff());
        level_increase = std::max(level_increase, ts.value(a_cl * alpha) - 1.0);
    }
    const bool ok = lyap <= 1e-8 && cov <= 1e-10 && ts.invariance_margin >= -1e-9 && row_excess <= 1e-9 &&
                    level_increase <= 1e-9;
    return {ok, "Lyapunov residual " + num(lyap) + ", steady covariance residual " + num(cov) + ", invariance margin " +
                    num(ts.invariance_margin) + ", 1000 boundary points: max row excess " + num(row_excess) +
                    ", max successor level - 1 " + num(level_increase)};
}

Outcome prs_suite(const Context& c) {
    const CovarianceSchedule& s = c.art.schedule;
    const TightenedSets& sets = c.art.sets;
    const NetworkModel& m = c.model;

    double nest = -kInf;
    for (std::size_t t = 0; t + 1 < s.bounded.size(); ++t) {
        const Vector r0 = s.bounded[t].diagonal().cwiseSqrt(), r1 = s.bounded[t + 1].diagonal().cwiseSqrt();
        nest = std::max(nest, (r0 - r1).maxCoeff());
        nest = std::max(nest, (r1 - s.bounded_steady.diagonal().cwiseSqrt()).maxCoeff());
    }
    double dominance = min_eigenvalue(s.bounded_steady - s.exact_steady);
    for (std::size_t t = 0; t < s.exact.size(); ++t) dominance = std::min(dominance, min_eigenvalue(s.bounded[t] - s.exact[t]));

    // coordinates and level of each subsystem's chance rows
    std::vector<std::vector<Index>> coords(m.subsystems.size());
    std::vector<double> gamma(m.subsystems.size(), 0.0);
    for (Index j = 0; j < m.state_set.rows(); ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (m.state_row_nominal[js]) continue;
        const auto i = static_cast<std::size_t>(m.state_row_owner[js]);
        gamma[i] = std::max(gamma[i], sets.state_gamma(j));
        for (Index col = 0; col < m.n; ++col) {
            if (m.state_set.H(j, col) != 0.0 && std::find(coords[i].begin(), coords[i].end(), col) == coords[i].end()) {
                coords[i].push_back(col);
            }
        }
    }
    const int samples = 100000;
    const auto N = static_cast<std::size_t>(m.horizon);
    std::vector<std::vector<int>> hits(N + 1, std::vector<int>(m.subsystems.size(), 0));
    const DisturbanceSampler sampler(m.distribution, m.noise_cov);
    const Matrix a_k = m.closed_loop();
    std::mt19937_64 rng(20240102);
    for (int k = 0; k < samples; ++k) {
        Vector e = Vector::Zero(m.n);
        for (std::size_t t = 1; t <= N; ++t) {
            e = a_k * e + sampler(rng);
            for (std::size_t i = 0; i < coords.size(); ++i) {
                bool inside = true;
                for (Index col : coords[i]) inside = inside && std::abs(e(col)) <= std::sqrt(gamma[i] * s.bounded[t](col, col));
                hits[t][i] += inside ? 1 : 0;
            }
        }
    }
    double coverage = kInf;
    for (std::size_t t = 1; t <= N; ++t) {
        for (std::size_t i = 0; i < coords.size(); ++i) {
            if (!coords[i].empty()) coverage = std::min(coverage, hits[t][i] / double(samples) - m.subsystems[i].p_x);
        }
    }

    bool grid = true;
    for (Index n = 1; n <= 10; ++n) {
        for (double p : {0.5, 0.7, 0.9, 0.99}) grid = grid && gaussian_gamma(n, p) <= chebyshev_gamma(n, p);
    }
    const double chi = chi_squared_quantile(1.0, 0.7);
    std::normal_distribution<double> normal;
    int inside = 0;
    const int draws = 1000000;
    for (int k = 0; k < draws; ++k) {
        const double xi = normal(rng);
        inside += xi * xi <= chi ? 1 : 0;
    }
    const double rate = inside / double(draws);

    const bool ok = nest <= 0.0 && dominance >= -1e-9 && coverage >= -0.01 && grid && std::abs(chi - 1.0742) < 5e-5 &&
                    std::abs(rate - 0.7) <= 0.01;
    return {ok, "largest radius decrease " + num(nest) + ", dominance min eig " + num(dominance) +
                    ", worst coverage - p " + num(coverage) + " (1e5 samples), gaussian <= chebyshev " +
                    (grid ? "yes" : "no") + ", chi2_1(0.7) = " + num(chi) + " covers " + num(rate)};
}

Outcome zero_noise(const Context& c) {
    ScenarioSpec fixed = c.scenario;
    fixed.noise_scale = 0.0;
    fixed.segments.resize(1);
    const ClosedLoopTrace a = run_closed_loop(c.model, c.art, fixed, 0);
    double increase = -kInf;
    for (std::size_t k = 1; k < a.objective.size(); ++k) increase = std::max(increase, a.objective[k] - a.objective[k - 1]);
    const double reach = (a.y.at(25) - fixed.segments[0].y_ref).cwiseAbs().maxCoeff();

    ScenarioSpec full = c.scenario;
    full.noise_scale = 0.0;
    const ClosedLoopTrace b = run_closed_loop(c.model, c.art, full, 0);
    double within = -kInf;
    for (int k = 1; k < b.steps(); ++k) {
        if (full.reference(k) != full.reference(k - 1)) continue;
        within = std::max(within, b.objective[static_cast<std::size_t>(k)] - b.objective[static_cast<std::size_t>(k - 1)]);
    }
    const bool ok = increase <= 1e-7 && within <= 1e-7 && reach <= 1e-4 && a.infeasible_events == 0;
    return {ok, "fixed y_ref1: largest objective increase " + num(increase) + ", |y(25) - y_ref1|_inf " + num(reach) +
                    "; full schedule: largest increase within segments " + num(within)};
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const std::filesystem::path data(DSMPC_DATA_DIR);
    Context c;
    try {
        c.model = load_network_file(data / "coupled-double-integrators.model.json");
        c.art = synthesize(c.model, model_hash(c.model));
        c.scenario = load_scenario(read_text_file(data / "coupled-double-integrators.scenario.json"));
        c.nominal = monte_carlo(c.model, c.art, c.scenario);
    } catch (const std::exception& e) {
        std::cout << "FAIL  setup: " << e.what() << '\n';
        return 1;
    }
    std::cout << "Monte-Carlo: " << c.nominal.report.runs << " runs x " << c.nominal.report.steps << " steps in "
              << std::chrono::duration<double>(clock::now() - start).count() << " s\n";

    const std::pair<const char*, std::function<Outcome(const Context&)>> criteria[] = {
        {"chance-constraint satisfaction", chance_constraints},
        {"unreachable reference projection", unreachable_reference},
        {"recursive feasibility", recursive_feasibility},
        {"admissible tracking", admissible_tracking},
        {"solver cross-validation", solver_cross_validation},
        {"synthesis residuals and certificates", synthesis_residuals},
        {"reachable-set properties", prs_suite},
        {"zero-noise sanity", zero_noise},
    };
    int failed = 0, index = 0;
    for (const auto& [name, fn] : criteria) {
        ++index;
        Outcome o;
        try {
            o = fn(c);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.passed ? 0 : 1;
        std::cout << (o.passed ? "PASS" : "FAIL") << "  " << index << ". " << name << ": " << o.detail << std::endl;
    }
    std::cout << 8 - failed << "/8 criteria passed in "
              << std::chrono::duration<double>(clock::now() - start).count() << " s\n";
    return failed == 0 ? 0 : 1;
}
