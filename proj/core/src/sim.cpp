#include "dsmpc/sim.hpp"

#include "dsmpc/error.hpp"
#include "json_util.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace dsmpc {
namespace {

using detail::from_vector;
using detail::json;
using detail::require;
using detail::to_vector;

constexpr const char* kModule = "sim";
constexpr double kShiftTolerance = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

SolveStatus parse_status(const std::string& s) {
    if (s == "optimal") return SolveStatus::Optimal;
    if (s == "infeasible") return SolveStatus::Infeasible;
    if (s == "max_iter") return SolveStatus::MaxIter;
    throw Error(ErrorCode::ParseError, kModule, "unknown solver status '" + s + "'");
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

void ScenarioSpec::validate(const NetworkModel& model) const {
    if (x0.size() != model.n) throw Error(ErrorCode::DimensionMismatch, kModule, "x0 has wrong dimension");
    if (segments.empty() || segments.front().start != 0) {
        throw Error(ErrorCode::InvalidArgument, kModule, "the first reference segment must start at k = 0");
    }
    for (std::size_t s = 0; s < segments.size(); ++s) {
        if (segments[s].y_ref.size() != model.l) {
            throw Error(ErrorCode::DimensionMismatch, kModule, "reference of segment " + std::to_string(s) + " has wrong dimension");
        }
        if (s > 0 && segments[s].start <= segments[s - 1].start) {
            throw Error(ErrorCode::InvalidArgument, kModule, "reference segments must be strictly ordered");
        }
    }
    if (runs < 1) throw Error(ErrorCode::InvalidArgument, kModule, "runs must be at least 1");
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, kModule, "steps must be at least 1");
    if (!(noise_scale >= 0.0)) throw Error(ErrorCode::InvalidArgument, kModule, "noise_scale must be nonnegative");
}

const Vector& ScenarioSpec::reference(int k) const {
    std::size_t s = 0;
    while (s + 1 < segments.size() && segments[s + 1].start <= k) ++s;
    return segments[s].y_ref;
}

int ScenarioSpec::segment_end(std::size_t s) const {
    return s + 1 < segments.size() ? std::min(segments[s + 1].start, steps) : steps;
}

ScenarioSpec load_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, std::string("scenario is not valid JSON: ") + e.what());
    }
    ScenarioSpec s;
    try {
        s.x0 = to_vector(require(j, "x0", kModule), kModule, "x0");
        if (j.contains("steps")) s.steps = j["steps"].get<int>();
        if (j.contains("runs")) s.runs = j["runs"].get<int>();
        if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("distribution")) s.distribution = parse_distribution(j["distribution"].get<std::string>());
        if (j.contains("noise_scale")) s.noise_scale = j["noise_scale"].get<double>();
        const json& segs = require(j, "segments", kModule);
        if (!segs.is_array()) throw Error(ErrorCode::ParseError, kModule, "segments must be a list");
        for (const auto& seg : segs) {
            s.segments.push_back({require(seg, "start", kModule).get<int>(),
                                  to_vector(require(seg, "y_ref", kModule), kModule, "y_ref")});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, std::string("malformed scenario: ") + e.what());
    }
    return s;
}

std::string serialize_scenario(const ScenarioSpec& s) {
    json j;
    j["x0"] = from_vector(s.x0);
    j["steps"] = s.steps;
    j["runs"] = s.runs;
    j["seed"] = s.seed;
    j["distribution"] = std::string(to_string(s.distribution));
    j["noise_scale"] = s.noise_scale;
    j["segments"] = json::array();
    for (const auto& seg : s.segments) j["segments"].push_back({{"start", seg.start}, {"y_ref", from_vector(seg.y_ref)}});
    return j.dump(2);
}

std::uint64_t run_seed(std::uint64_t master, std::uint64_t run) { return splitmix64(splitmix64(master) ^ run); }

DisturbanceSampler::DisturbanceSampler(Distribution distribution, const Matrix& cov) : distribution_(distribution) {
    if (cov.rows() != cov.cols() || cov.rows() == 0) {
        throw Error(ErrorCode::NotPD, kModule, "disturbance covariance must be square and nonempty");
    }
    const Eigen::LLT<Matrix> llt(symmetrized(cov));
    if (llt.info() != Eigen::Success || min_eigenvalue(cov) <= 0.0) {
        throw Error(ErrorCode::NotPD, kModule, "disturbance covariance is not positive definite");
    }
    factor_ = llt.matrixL();
    half_width_ = (3.0 * cov.diagonal()).cwiseSqrt();
}

Vector DisturbanceSampler::operator()(std::mt19937_64& rng) const {
    const Index n = half_width_.size();
    Vector w(n);
    if (distribution_ == Distribution::Gaussian) {
        std::normal_distribution<double> normal;
        for (Index j = 0; j < n; ++j) w(j) = normal(rng);
        return factor_ * w;
    }
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (Index j = 0; j < n; ++j) w(j) = half_width_(j) * unit(rng);
    return w;
}

Vector sample_disturbance(Distribution distribution, const Matrix& cov, std::mt19937_64& rng) {
    return DisturbanceSampler(distribution, cov)(rng);
}

std::vector<Vector> replay_states(const NetworkModel& model, const ClosedLoopTrace& trace) {
    std::vector<Vector> x{trace.x.front()};
    for (int k = 0; k < trace.steps(); ++k) {
        const auto s = static_cast<std::size_t>(k);
        x.push_back(model.A * x.back() + model.B * trace.u[s] + trace.w[s]);
    }
    return x;
}

TubeController::TubeController(OcpSolver solver) : solver_(std::move(solver)), reference_(solver_.spec().y_ref) {}

void TubeController::reset() { last_.reset(); }

TubeController::Step TubeController::step(const Vector& x, const Vector& y_ref) {
    if (!reference_ || y_ref != *reference_) {
        solver_.set_reference(y_ref);
        reference_ = y_ref;
    }
    const OcpSpec& spec = solver_.spec();
    std::optional<Vector> shifted;
    if (last_) shifted = shift_solution(spec, *last_);
    const Vector* warm = shifted ? &*shifted : nullptr;

    Step out;
    std::optional<OcpSolution> chosen;
    if (initial_state_admissible(spec, x)) {
        OcpSolution sol = solver_.solve(x, warm);
        if (!mode1_failed(sol)) {
            out.mode = 1;
            chosen = std::move(sol);
        }
    }
    if (!chosen) {
        if (!last_) {
            throw Error(ErrorCode::InitialInfeasible, kModule,
                        "the optimal control problem has no solution for the initial state");
        }
        out.mode = 2;
        const Vector z_init = last_->z[1];
        OcpSolution sol = solver_.solve(z_init, warm);
        if (sol.status == SolveStatus::Optimal) {
            chosen = std::move(sol);
        } else if (constraint_violation(spec, *shifted, z_init) <= kShiftTolerance) {
            const SolveStatus status = sol.status;
            chosen = unpack_solution(spec, *shifted);
            chosen->status = status;
        } else {
            out.infeasible = mode1_failed(sol);
            chosen = std::move(sol);
            if (out.infeasible) {
                const SolveStatus status = chosen->status;
                chosen = unpack_solution(spec, *shifted);
                chosen->status = status;
            }
        }
    }
    if (out.mode == 1) chosen->z.front() = x;
    out.status = chosen->status;
    out.z0 = chosen->z.front();
    out.objective = chosen->objective;
    out.u = chosen->v.front() + spec.K * (x - out.z0);
    last_ = std::move(chosen);
    return out;
}

SolverSettings SimulationOptions::default_settings() {
    SolverSettings s;
    s.eps_abs = 1e-6;
    s.eps_rel = 1e-6;
    s.max_iterations = 10000;
    return s;
}

OcpSolver make_ocp_solver(const NetworkModel& model, const SynthesisArtifacts& artifacts, const ScenarioSpec& scenario,
                          const SimulationOptions& options) {
    scenario.validate(model);
    OcpSpec spec = build_ocp(model, artifacts.sets, artifacts.terminal, artifacts.cost.P, scenario.segments.front().y_ref);
    return OcpSolver(std::move(spec), options.backend, options.solver);
}

ClosedLoopTrace run_closed_loop(const NetworkModel& model, const SynthesisArtifacts& artifacts,
                                const ScenarioSpec& scenario, std::uint64_t seed, const SimulationOptions& options) {
    return run_closed_loop(model, TubeController(make_ocp_solver(model, artifacts, scenario, options)), scenario, seed);
}

ClosedLoopTrace run_closed_loop(const NetworkModel& model, const TubeController& prototype,
                                const ScenarioSpec& scenario, std::uint64_t seed) {
    scenario.validate(model);
    TubeController controller = prototype;
    controller.reset();
    std::optional<DisturbanceSampler> sampler;
    if (scenario.noise_scale > 0.0) sampler.emplace(scenario.distribution, scenario.noise_scale * model.noise_cov);
    std::mt19937_64 rng(seed);

    ClosedLoopTrace trace;
    trace.seed = seed;
    Vector x = scenario.x0;
    trace.x.push_back(x);
    trace.y.push_back(model.C * x);
    for (int k = 0; k < scenario.steps; ++k) {
        const TubeController::Step s = controller.step(x, scenario.reference(k));
        const Vector w = sampler ? (*sampler)(rng) : Vector::Zero(model.n);
        x = model.A * x + model.B * s.u + w;
        trace.u.push_back(s.u);
        trace.w.push_back(w);
        trace.z0.push_back(s.z0);
        trace.mode.push_back(s.mode);
        trace.status.push_back(s.status);
        trace.objective.push_back(s.objective);
        trace.infeasible.push_back(static_cast<char>(s.infeasible));
        trace.infeasible_events += s.infeasible ? 1 : 0;
        trace.mode2_activations += s.mode == 2 ? 1 : 0;
        trace.x.push_back(x);
        trace.y.push_back(model.C * x);
    }
    return trace;
}

Vector empirical_satisfaction(const std::vector<ClosedLoopTrace>& traces, const Vector& row, double offset) {
    if (traces.empty()) return Vector();
    const std::size_t K = traces.front().x.size();
    Vector rate = Vector::Zero(static_cast<Index>(K));
    for (const auto& tr : traces) {
        for (std::size_t k = 0; k < K; ++k) {
            if (row.dot(tr.x[k]) <= offset) rate(static_cast<Index>(k)) += 1.0;
        }
    }
    return rate / static_cast<double>(traces.size());
}

StatsReport aggregate(const NetworkModel& model, const ScenarioSpec& scenario, const std::vector<ClosedLoopTrace>& traces) {
    if (traces.empty()) throw Error(ErrorCode::EmptyTraceDir, kModule, "no traces to aggregate");
    StatsReport r;
    r.runs = static_cast<int>(traces.size());
    r.steps = traces.front().steps();
    const Index K1 = r.steps + 1;
    const auto M = static_cast<Index>(model.num_subsystems());
    const double runs = r.runs;
    for (Index j = 0; j < model.state_set.rows(); ++j) {
        if (!model.state_row_nominal[static_cast<std::size_t>(j)]) r.chance_rows.push_back(j);
    }
    const auto nr = static_cast<Index>(r.chance_rows.size());
    r.row_satisfaction = Matrix::Zero(K1, nr);
    r.subsystem_satisfaction = Matrix::Zero(K1, M);
    r.mean_output = Matrix::Zero(K1, model.l);
    Matrix second = Matrix::Zero(K1, model.l);
    for (const auto& s : model.subsystems) r.subsystem_probability.push_back(s.p_x);

    for (const auto& tr : traces) {
        if (tr.steps() != r.steps) throw Error(ErrorCode::DimensionMismatch, kModule, "traces have different lengths");
        r.infeasible_events += tr.infeasible_events;
        r.mode2_activations += tr.mode2_activations;
        for (Index k = 0; k < K1; ++k) {
            const Vector& x = tr.x[static_cast<std::size_t>(k)];
            std::vector<char> ok(static_cast<std::size_t>(M), 1);
            for (Index c = 0; c < nr; ++c) {
                const Index j = r.chance_rows[static_cast<std::size_t>(c)];
                const bool sat = model.state_set.H.row(j).dot(x) <= model.state_set.h(j);
                if (sat) r.row_satisfaction(k, c) += 1.0;
                if (!sat) ok[static_cast<std::size_t>(model.state_row_owner[static_cast<std::size_t>(j)])] = 0;
            }
            for (Index i = 0; i < M; ++i) r.subsystem_satisfaction(k, i) += ok[static_cast<std::size_t>(i)];
            const Vector& y = tr.y[static_cast<std::size_t>(k)];
            r.mean_output.row(k) += y.transpose();
            second.row(k) += y.cwiseAbs2().transpose();
        }
    }
    r.row_satisfaction /= runs;
    r.subsystem_satisfaction /= runs;
    r.mean_output /= runs;
    second /= runs;
    const Matrix variance = (second - r.mean_output.cwiseAbs2()).cwiseMax(0.0) * (runs > 1 ? runs / (runs - 1) : 0.0);
    const Matrix std_error = (variance / runs).cwiseSqrt();

    r.tracking_error.resize(K1);
    for (Index k = 0; k < K1; ++k) {
        const Vector& ref = scenario.reference(static_cast<int>(std::min<Index>(k, r.steps - 1)));
        r.tracking_error(k) = (r.mean_output.row(k).transpose() - ref).cwiseAbs().maxCoeff();
    }
    for (std::size_t s = 0; s < scenario.segments.size(); ++s) {
        SegmentSummary seg;
        seg.start = scenario.segments[s].start;
        seg.end = std::min(scenario.segment_end(s), r.steps);
        if (seg.start >= r.steps) continue;
        seg.y_ref = scenario.segments[s].y_ref;
        seg.mean_output = r.mean_output.row(seg.end).transpose();
        seg.std_error = std_error.row(seg.end).transpose();
        r.segments.push_back(std::move(seg));
    }
    r.min_satisfaction = 1.0;
    for (Index k = 0; k < K1; ++k) {
        for (Index i = 0; i < M; ++i) {
            if (r.subsystem_satisfaction(k, i) < r.min_satisfaction) {
                r.min_satisfaction = r.subsystem_satisfaction(k, i);
                r.worst_step = static_cast<int>(k);
                r.worst_subsystem = i;
            }
        }
    }
    return r;
}

MonteCarloResult monte_carlo(const NetworkModel& model, const SynthesisArtifacts& artifacts,
                             const ScenarioSpec& scenario, const SimulationOptions& options) {
    const TubeController prototype(make_ocp_solver(model, artifacts, scenario, options));
    MonteCarloResult out;
    out.traces.resize(static_cast<std::size_t>(scenario.runs));
    unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(scenario.runs));

    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(threads);
    auto worker = [&](unsigned id) {
        try {
            for (int run = next++; run < scenario.runs; run = next++) {
                out.traces[static_cast<std::size_t>(run)] =
                    run_closed_loop(model, prototype, scenario, run_seed(scenario.seed, static_cast<std::uint64_t>(run)));
            }
        } catch (...) {
            errors[id] = std::current_exception();
            next = scenario.runs;
        }
    };
    if (threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    out.report = aggregate(model, scenario, out.traces);
    return out;
}

std::string trace_csv(const ClosedLoopTrace& tr) {
    std::ostringstream os;
    os << std::setprecision(17);
    const Index n = tr.x.front().size(), l = tr.y.front().size();
    const Index m = tr.u.empty() ? 0 : tr.u.front().size();
    os << 'k';
    for (Index j = 0; j < n; ++j) os << ",x" << j;
    for (Index j = 0; j < m; ++j) os << ",u" << j;
    for (Index j = 0; j < n; ++j) os << ",w" << j;
    for (Index j = 0; j < l; ++j) os << ",y" << j;
    os << ",mode,status,objective,infeasible\n";
    for (std::size_t k = 0; k < tr.x.size(); ++k) {
        const bool last = k == tr.u.size();
        os << k;
        for (Index j = 0; j < n; ++j) os << ',' << tr.x[k](j);
        for (Index j = 0; j < m; ++j) os << ',' << (last ? 0.0 : tr.u[k](j));
        for (Index j = 0; j < n; ++j) os << ',' << (last ? 0.0 : tr.w[k](j));
        for (Index j = 0; j < l; ++j) os << ',' << tr.y[k](j);
        if (last) {
            os << ",,,,\n";
        } else {
            os << ',' << tr.mode[k] << ',' << to_string(tr.status[k]) << ',' << tr.objective[k] << ','
               << static_cast<int>(tr.infeasible[k]) << '\n';
        }
    }
    return os.str();
}

ClosedLoopTrace parse_trace_csv(const std::string& text, Index n, Index m, Index l) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, kModule, "empty trace file");
    const auto width = static_cast<std::size_t>(1 + n + m + n + l + 4);
    if (split(line, ',').size() != width) throw Error(ErrorCode::DimensionMismatch, kModule, "trace columns do not match the model");
    ClosedLoopTrace tr;
    auto read = [](const std::vector<std::string>& cells, std::size_t first, Index count) {
        Vector v(count);
        for (Index j = 0; j < count; ++j) v(j) = std::stod(cells[first + static_cast<std::size_t>(j)]);
        return v;
    };
    try {
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto cells = split(line, ',');
            if (cells.size() != width) throw Error(ErrorCode::ParseError, kModule, "ragged trace row");
            std::size_t c = 1;
            tr.x.push_back(read(cells, c, n));
            c += static_cast<std::size_t>(n);
            const Vector u = read(cells, c, m);
            c += static_cast<std::size_t>(m);
            const Vector w = read(cells, c, n);
            c += static_cast<std::size_t>(n);
            tr.y.push_back(read(cells, c, l));
            c += static_cast<std::size_t>(l);
            if (cells[c].empty()) break;
            tr.u.push_back(u);
            tr.w.push_back(w);
            tr.mode.push_back(std::stoi(cells[c]));
            tr.status.push_back(parse_status(cells[c + 1]));
            tr.objective.push_back(std::stod(cells[c + 2]));
            tr.infeasible.push_back(static_cast<char>(std::stoi(cells[c + 3])));
            tr.infeasible_events += tr.infeasible.back();
            tr.mode2_activations += tr.mode.back() == 2 ? 1 : 0;
        }
    } catch (const std::logic_error& e) {
        throw Error(ErrorCode::ParseError, kModule, std::string("bad number in trace: ") + e.what());
    }
    if (tr.x.empty()) throw Error(ErrorCode::ParseError, kModule, "trace has no rows");
    return tr;
}

std::string aggregate_csv(const StatsReport& r) {
    std::ostringstream os;
    os << std::setprecision(10) << 'k';
    for (Index row : r.chance_rows) os << ",rate_row" << row;
    for (Index i = 0; i < r.subsystem_satisfaction.cols(); ++i) os << ",rate_sub" << i;
    for (Index j = 0; j < r.mean_output.cols(); ++j) os << ",mean_y" << j;
    os << ",tracking_error\n";
    for (Index k = 0; k < r.mean_output.rows(); ++k) {
        os << k;
        for (Index c = 0; c < r.row_satisfaction.cols(); ++c) os << ',' << r.row_satisfaction(k, c);
        for (Index i = 0; i < r.subsystem_satisfaction.cols(); ++i) os << ',' << r.subsystem_satisfaction(k, i);
        for (Index j = 0; j < r.mean_output.cols(); ++j) os << ',' << r.mean_output(k, j);
        os << ',' << r.tracking_error(k) << '\n';
    }
    return os.str();
}

std::string summary_json(const StatsReport& r) {
    json j;
    j["runs"] = r.runs;
    j["steps"] = r.steps;
    j["infeasible_events"] = r.infeasible_events;
    j["mode2_activations"] = r.mode2_activations;
    j["min_satisfaction"] = r.min_satisfaction;
    j["worst_step"] = r.worst_step;
    j["worst_subsystem"] = r.worst_subsystem;
    j["subsystem_probability"] = r.subsystem_probability;
    std::vector<double> per_sub;
    for (Index i = 0; i < r.subsystem_satisfaction.cols(); ++i) per_sub.push_back(r.subsystem_satisfaction.col(i).minCoeff());
    j["min_satisfaction_per_subsystem"] = per_sub;
    j["segments"] = json::array();
    for (const auto& s : r.segments) {
        j["segments"].push_back({{"start", s.start},
                                 {"end", s.end},
                                 {"y_ref", from_vector(s.y_ref)},
                                 {"mean_output", from_vector(s.mean_output)},
                                 {"std_error", from_vector(s.std_error)},
                                 {"tracking_error", (s.mean_output - s.y_ref).cwiseAbs().maxCoeff()}});
    }
    return j.dump(2);
}

}  // namespace dsmpc
