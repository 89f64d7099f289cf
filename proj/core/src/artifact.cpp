#include "dsmpc/artifact.hpp"

#include "dsmpc/error.hpp"
#include "json_util.hpp"

#include <iomanip>
#include <sstream>

namespace dsmpc {
namespace {

using detail::from_matrix;
using detail::from_matrix_list;
using detail::from_vector;
using detail::json;
using detail::require;
using detail::to_matrix;
using detail::to_matrix_list;
using detail::to_vector;

constexpr const char* kModule = "artifact";

json from_polytope(const Polytope& p) { return {{"H", from_matrix(p.H)}, {"h", from_vector(p.h)}}; }

Polytope to_polytope(const json& j, const std::string& what) {
    Polytope p;
    p.H = to_matrix(require(j, "H", kModule), kModule, what + ".H");
    p.h = to_vector(require(j, "h", kModule), kModule, what + ".h");
    if (p.H.rows() != p.h.size()) throw Error(ErrorCode::DimensionMismatch, kModule, what + ": H and h disagree");
    return p;
}

json from_polytopes(const std::vector<Polytope>& list) {
    json out = json::array();
    for (const auto& p : list) out.push_back(from_polytope(p));
    return out;
}

std::vector<Polytope> to_polytopes(const json& j, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorCode::ParseError, kModule, what + ": expected a list");
    std::vector<Polytope> out;
    for (const auto& e : j) out.push_back(to_polytope(e, what));
    return out;
}

double max_shrink(const Polytope& original, const Polytope& tightened) {
    return original.rows() == 0 ? 0.0 : (original.h - tightened.h).maxCoeff();
}

}  // namespace

std::string_view to_string(TerminalShape shape) { return shape == TerminalShape::Box ? "box" : "identity"; }

TerminalShape parse_terminal_shape(std::string_view text) {
    if (text == "box") return TerminalShape::Box;
    if (text == "identity") return TerminalShape::Identity;
    throw Error(ErrorCode::InvalidArgument, kModule, "unknown terminal shape '" + std::string(text) + "'");
}

SynthesisArtifacts synthesize(const NetworkModel& model, const std::string& model_hash, const SynthesisOptions& options) {
    SynthesisArtifacts a;
    a.model_hash = model_hash;
    a.gamma_policy = options.gamma_policy;
    a.terminal_shape = options.terminal_shape;
    a.closed_loop_radius = spectral_radius(model.closed_loop());
    a.schedule = build_covariance_schedule(model);
    a.sets = build_tightened_sets(model, a.schedule, options.gamma_policy);
    a.cost = solve_lyapunov_cost(model.closed_loop(), model.Q, model.R, model.K);
    std::vector<Index> dims;
    for (const auto& s : model.subsystems) dims.push_back(s.state_dim);
    a.cost.off_block_mass = off_block_mass(a.cost.P, dims);
    a.terminal = build_terminal_set(model, a.cost.P, a.sets, options.terminal_shape);
    return a;
}

std::string serialize_artifacts(const SynthesisArtifacts& a) {
    const CovarianceSchedule& s = a.schedule;
    const TerminalSet& t = a.terminal;
    json j;
    j["version"] = a.version;
    j["model_hash"] = a.model_hash;
    j["gamma_policy"] = std::string(to_string(a.gamma_policy));
    j["terminal_shape"] = std::string(to_string(a.terminal_shape));
    j["closed_loop_radius"] = a.closed_loop_radius;
    j["schedule"] = {
        {"horizon", s.horizon},
        {"exact", from_matrix_list(s.exact)},
        {"bounded", from_matrix_list(s.bounded)},
        {"exact_steady", from_matrix(s.exact_steady)},
        {"bounded_steady", from_matrix(s.bounded_steady)},
        {"input_exact", from_matrix_list(s.input_exact)},
        {"input_bounded", from_matrix_list(s.input_bounded)},
        {"input_exact_steady", from_matrix(s.input_exact_steady)},
        {"input_bounded_steady", from_matrix(s.input_bounded_steady)},
    };
    j["sets"] = {
        {"state", from_polytopes(a.sets.state)},
        {"input", from_polytopes(a.sets.input)},
        {"state_terminal", from_polytope(a.sets.state_terminal)},
        {"input_terminal", from_polytope(a.sets.input_terminal)},
        {"state_gamma", from_vector(a.sets.state_gamma)},
        {"input_gamma", from_vector(a.sets.input_gamma)},
    };
    j["cost"] = {{"P", from_matrix(a.cost.P)}, {"residual", a.cost.residual}, {"off_block_mass", a.cost.off_block_mass}};
    j["terminal"] = {
        {"n", t.n},
        {"m", t.m},
        {"p_f", from_matrix(t.p_f)},
        {"p_z", from_matrix(t.p_z)},
        {"p_v", from_matrix(t.p_v)},
        {"lambda", t.lambda},
        {"shape", from_matrix(t.shape)},
        {"invariance_margin", t.invariance_margin},
        {"admissibility_margin", t.admissibility_margin},
        {"levels", t.levels},
    };
    return j.dump(1);
}

SynthesisArtifacts load_artifacts(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, std::string("artifact is not valid JSON: ") + e.what());
    }
    SynthesisArtifacts a;
    try {
        a.version = require(j, "version", kModule).get<int>();
        if (a.version != SynthesisArtifacts::kVersion) {
            throw Error(ErrorCode::ParseError, kModule, "unsupported artifact version " + std::to_string(a.version));
        }
        a.model_hash = require(j, "model_hash", kModule).get<std::string>();
        a.gamma_policy = parse_gamma_policy(require(j, "gamma_policy", kModule).get<std::string>());
        a.terminal_shape = parse_terminal_shape(require(j, "terminal_shape", kModule).get<std::string>());
        a.closed_loop_radius = require(j, "closed_loop_radius", kModule).get<double>();

        const json& s = require(j, "schedule", kModule);
        a.schedule.horizon = require(s, "horizon", kModule).get<int>();
        a.schedule.exact = to_matrix_list(require(s, "exact", kModule), kModule, "schedule.exact");
        a.schedule.bounded = to_matrix_list(require(s, "bounded", kModule), kModule, "schedule.bounded");
        a.schedule.exact_steady = to_matrix(require(s, "exact_steady", kModule), kModule, "schedule.exact_steady");
        a.schedule.bounded_steady = to_matrix(require(s, "bounded_steady", kModule), kModule, "schedule.bounded_steady");
        a.schedule.input_exact = to_matrix_list(require(s, "input_exact", kModule), kModule, "schedule.input_exact");
        a.schedule.input_bounded = to_matrix_list(require(s, "input_bounded", kModule), kModule, "schedule.input_bounded");
        a.schedule.input_exact_steady =
            to_matrix(require(s, "input_exact_steady", kModule), kModule, "schedule.input_exact_steady");
        a.schedule.input_bounded_steady =
            to_matrix(require(s, "input_bounded_steady", kModule), kModule, "schedule.input_bounded_steady");

        const json& sets = require(j, "sets", kModule);
        a.sets.state = to_polytopes(require(sets, "state", kModule), "sets.state");
        a.sets.input = to_polytopes(require(sets, "input", kModule), "sets.input");
        a.sets.state_terminal = to_polytope(require(sets, "state_terminal", kModule), "sets.state_terminal");
        a.sets.input_terminal = to_polytope(require(sets, "input_terminal", kModule), "sets.input_terminal");
        a.sets.state_gamma = to_vector(require(sets, "state_gamma", kModule), kModule, "sets.state_gamma");
        a.sets.input_gamma = to_vector(require(sets, "input_gamma", kModule), kModule, "sets.input_gamma");

        const json& c = require(j, "cost", kModule);
        a.cost.P = to_matrix(require(c, "P", kModule), kModule, "cost.P");
        a.cost.residual = require(c, "residual", kModule).get<double>();
        a.cost.off_block_mass = require(c, "off_block_mass", kModule).get<double>();

        const json& t = require(j, "terminal", kModule);
        a.terminal.n = require(t, "n", kModule).get<Index>();
        a.terminal.m = require(t, "m", kModule).get<Index>();
        a.terminal.p_f = to_matrix(require(t, "p_f", kModule), kModule, "terminal.p_f");
        a.terminal.p_z = to_matrix(require(t, "p_z", kModule), kModule, "terminal.p_z");
        a.terminal.p_v = to_matrix(require(t, "p_v", kModule), kModule, "terminal.p_v");
        a.terminal.lambda = require(t, "lambda", kModule).get<double>();
        a.terminal.shape = to_matrix(require(t, "shape", kModule), kModule, "terminal.shape");
        a.terminal.invariance_margin = require(t, "invariance_margin", kModule).get<double>();
        a.terminal.admissibility_margin = require(t, "admissibility_margin", kModule).get<double>();
        a.terminal.levels = require(t, "levels", kModule).get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, kModule, std::string("malformed artifact: ") + e.what());
    }
    return a;
}

void check_artifacts(const SynthesisArtifacts& a, const NetworkModel& model, const std::string& model_hash) {
    if (a.model_hash != model_hash) {
        throw Error(ErrorCode::ArtifactModelMismatch, kModule,
                    "artifact was synthesized from model " + a.model_hash + ", not " + model_hash +
                        "; rerun synth for this model");
    }
    const auto N = static_cast<std::size_t>(model.horizon);
    const Index ts = 2 * model.n + model.m;
    const bool ok = a.schedule.horizon == model.horizon && a.sets.state.size() == N && a.sets.input.size() == N &&
                    a.cost.P.rows() == model.n && a.terminal.n == model.n && a.terminal.m == model.m &&
                    a.terminal.shape.rows() == ts && a.terminal.shape.cols() == ts &&
                    a.sets.state_terminal.dim() == model.n && a.sets.input_terminal.dim() == model.m;
    if (!ok) throw Error(ErrorCode::ArtifactModelMismatch, kModule, "artifact dimensions do not match the model");
}

std::string synthesis_report(const SynthesisArtifacts& a, const NetworkModel& model) {
    std::ostringstream os;
    os << std::setprecision(6);
    os << "model " << a.model_hash << ": " << model.num_subsystems() << " subsystems, n=" << model.n
       << " m=" << model.m << " l=" << model.l << " N=" << model.horizon << '\n';
    os << "gamma policy " << to_string(a.gamma_policy) << ", distribution " << to_string(model.distribution) << '\n';
    os << "spectral radius A+BK      " << a.closed_loop_radius << '\n';
    os << "Lyapunov residual         " << a.cost.residual << '\n';
    os << "P off-block mass          " << a.cost.off_block_mass << '\n';
    os << "max tightening per stage (state / input):\n";
    for (std::size_t t = 0; t < a.sets.state.size(); ++t) {
        os << "  t=" << t << "  " << max_shrink(model.state_set, a.sets.state[t]) << " / "
           << max_shrink(model.input_set, a.sets.input[t]) << '\n';
    }
    os << "  inf  " << max_shrink(model.state_set, a.sets.state_terminal) << " / "
       << max_shrink(model.input_set, a.sets.input_terminal) << '\n';
    os << "terminal shape " << to_string(a.terminal_shape) << ", scale lambda " << a.terminal.lambda << '\n';
    os << "invariance margin         " << a.terminal.invariance_margin << '\n';
    os << "admissibility margin      " << a.terminal.admissibility_margin << '\n';
    return os.str();
}

}  // namespace dsmpc
