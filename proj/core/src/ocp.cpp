#include "dsmpc/ocp.hpp"

#include "dsmpc/error.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace dsmpc {
namespace {

constexpr const char* kModule = "ocp";
constexpr double kMode1ResidualLimit = 1e-4;

struct RowBuilder {
    std::vector<std::vector<std::pair<Index, double>>> coeffs;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<Index> owner;

    Index add(Index row_owner, double lo, double hi) {
        coeffs.emplace_back();
        lower.push_back(lo);
        upper.push_back(hi);
        owner.push_back(row_owner);
        return static_cast<Index>(coeffs.size()) - 1;
    }
    void set(Index row, Index col, double value) {
        if (value != 0.0) coeffs[static_cast<std::size_t>(row)].emplace_back(col, value);
    }
};

std::vector<Index> range(Index first, Index count) {
    std::vector<Index> out(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = first + k;
    return out;
}

CostTerm difference_term(Index a, Index b, Index size, const Matrix& w, Index owner) {
    CostTerm t;
    t.variables = range(a, size);
    const auto second = range(b, size);
    t.variables.insert(t.variables.end(), second.begin(), second.end());
    t.G = Matrix::Zero(size, 2 * size);
    t.G.leftCols(size).setIdentity();
    t.G.rightCols(size) = -Matrix::Identity(size, size);
    t.W = w;
    t.g = Vector::Zero(size);
    t.owner = owner;
    return t;
}

void assemble_cost(OcpSpec& spec) {
    const Index nv = spec.layout.size();
    spec.qp.cost = Matrix::Zero(nv, nv);
    spec.qp.linear = Vector::Zero(nv);
    spec.constant = 0.0;
    for (const auto& t : spec.terms) {
        const Matrix h = 2.0 * t.G.transpose() * t.W * t.G;
        const Vector q = -2.0 * t.G.transpose() * (t.W * t.g);
        for (std::size_t r = 0; r < t.variables.size(); ++r) {
            spec.qp.linear(t.variables[r]) += q(static_cast<Index>(r));
            for (std::size_t c = 0; c < t.variables.size(); ++c) {
                spec.qp.cost(t.variables[r], t.variables[c]) += h(static_cast<Index>(r), static_cast<Index>(c));
            }
        }
        spec.constant += t.g.dot(t.W * t.g);
    }
}

Vector term_linear(const CostTerm& t) { return -2.0 * t.G.transpose() * (t.W * t.g); }

std::set<Index> support(const OcpSpec& spec, const std::vector<Index>& vars) {
    std::set<Index> s;
    for (Index v : vars) s.insert(spec.var_subsystem[static_cast<std::size_t>(v)]);
    return s;
}

// Agent whose neighbourhood covers `sub`; the tagged owner is preferred.
Index covering_agent(const OcpSpec& spec, const std::set<Index>& sub, Index preferred) {
    auto covers = [&](Index i) {
        const auto& nb = spec.neighbors[static_cast<std::size_t>(i)];
        return std::all_of(sub.begin(), sub.end(), [&](Index j) { return std::binary_search(nb.begin(), nb.end(), j); });
    };
    if (preferred >= 0 && covers(preferred)) return preferred;
    for (Index i = 0; i < spec.num_subsystems(); ++i) {
        if (covers(i)) return i;
    }
    return spec.num_subsystems();
}

Vector local_linear(const OcpSpec& spec, const DistributedOcp& split, std::size_t agent) {
    const auto& vars = split.agents[agent].variables;
    Vector q = Vector::Zero(static_cast<Index>(vars.size()));
    for (std::size_t ti : split.agent_terms[agent]) {
        const CostTerm& t = spec.terms[ti];
        const Vector tq = term_linear(t);
        for (std::size_t r = 0; r < t.variables.size(); ++r) {
            const auto it = std::lower_bound(vars.begin(), vars.end(), t.variables[r]);
            q(static_cast<Index>(it - vars.begin())) += tq(static_cast<Index>(r));
        }
    }
    return q;
}

}  // namespace

std::string_view to_string(Backend b) { return b == Backend::Centralized ? "centralized" : "distributed"; }

Backend parse_backend(std::string_view text) {
    if (text == "centralized") return Backend::Centralized;
    if (text == "distributed") return Backend::Distributed;
    throw Error(ErrorCode::InvalidArgument, kModule, "unknown backend '" + std::string(text) + "'");
}

OcpSpec build_ocp(const NetworkModel& model, const TightenedSets& sets, const TerminalSet& terminal, const Matrix& P,
                  const Vector& y_ref) {
    const Index n = model.n, m = model.m, l = model.l;
    const int N = model.horizon;
    if (static_cast<int>(sets.state.size()) != N || static_cast<int>(sets.input.size()) != N || P.rows() != n ||
        P.cols() != n || terminal.n != n || terminal.m != m || y_ref.size() != l) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "synthesis artifacts do not match the model dimensions");
    }
    OcpSpec spec;
    spec.layout = {n, m, l, N};
    const OcpLayout& L = spec.layout;
    spec.A = model.A;
    spec.B = model.B;
    spec.C = model.C;
    spec.K = model.K;
    spec.stage0 = sets.state.front();
    spec.y_ref = y_ref;
    for (const auto& s : model.subsystems) spec.neighbors.push_back(s.neighbors);

    spec.var_subsystem.assign(static_cast<std::size_t>(L.size()), 0);
    for (std::size_t i = 0; i < model.subsystems.size(); ++i) {
        const auto& s = model.subsystems[i];
        const auto tag = static_cast<Index>(i);
        auto mark = [&](Index first, Index count) {
            for (Index k = 0; k < count; ++k) spec.var_subsystem[static_cast<std::size_t>(first + k)] = tag;
        };
        for (int t = 0; t <= N; ++t) mark(L.z(t) + model.state_offset[i], s.state_dim);
        for (int t = 0; t < N; ++t) mark(L.v(t) + model.input_offset[i], s.input_dim);
        mark(L.zs() + model.state_offset[i], s.state_dim);
        mark(L.vs() + model.input_offset[i], s.input_dim);
        mark(L.ys() + model.output_offset[i], s.output_dim);
    }

    // Cost terms.
    for (int t = 0; t < N; ++t) {
        for (std::size_t i = 0; i < model.subsystems.size(); ++i) {
            const auto& s = model.subsystems[i];
            const auto tag = static_cast<Index>(i);
            spec.terms.push_back(difference_term(L.z(t) + model.state_offset[i], L.zs() + model.state_offset[i],
                                                 s.state_dim, s.q, tag));
            spec.terms.push_back(difference_term(L.v(t) + model.input_offset[i], L.vs() + model.input_offset[i],
                                                 s.input_dim, s.r, tag));
        }
    }
    std::vector<Index> dims;
    for (const auto& s : model.subsystems) dims.push_back(s.state_dim);
    if (off_block_mass(P, dims) <= 1e-14) {
        for (std::size_t i = 0; i < model.subsystems.size(); ++i) {
            const Index off = model.state_offset[i], d = model.subsystems[i].state_dim;
            spec.terms.push_back(difference_term(L.z(N) + off, L.zs() + off, d, P.block(off, off, d, d), static_cast<Index>(i)));
        }
    } else {
        spec.terms.push_back(difference_term(L.z(N), L.zs(), n, symmetrized(P), kCoordinator));
    }
    for (std::size_t i = 0; i < model.subsystems.size(); ++i) {
        const auto& s = model.subsystems[i];
        if (s.output_dim == 0) continue;
        CostTerm t;
        t.variables = range(L.ys() + model.output_offset[i], s.output_dim);
        t.G = Matrix::Identity(s.output_dim, s.output_dim);
        t.W = s.t;
        t.g = y_ref.segment(model.output_offset[i], s.output_dim);
        t.owner = static_cast<Index>(i);
        t.reference = true;
        t.reference_offset = model.output_offset[i];
        spec.terms.push_back(t);
    }
    assemble_cost(spec);

    // Constraint rows.
    RowBuilder rb;
    for (Index r = 0; r < n; ++r) {
        const Index row = rb.add(model.state_owner(r), 0.0, 0.0);
        rb.set(row, L.z(0) + r, 1.0);
    }
    spec.initial_rows = n;
    for (int t = 0; t < N; ++t) {
        for (Index r = 0; r < n; ++r) {
            const Index row = rb.add(model.state_owner(r), 0.0, 0.0);
            rb.set(row, L.z(t + 1) + r, 1.0);
            for (Index c = 0; c < n; ++c) rb.set(row, L.z(t) + c, -model.A(r, c));
            for (Index c = 0; c < m; ++c) rb.set(row, L.v(t) + c, -model.B(r, c));
        }
    }
    for (Index r = 0; r < n; ++r) {
        const Index row = rb.add(model.state_owner(r), 0.0, 0.0);
        for (Index c = 0; c < n; ++c) rb.set(row, L.zs() + c, model.A(r, c) - (r == c ? 1.0 : 0.0));
        for (Index c = 0; c < m; ++c) rb.set(row, L.vs() + c, model.B(r, c));
    }
    for (Index r = 0; r < l; ++r) {
        Index owner = 0;
        for (std::size_t i = 0; i < model.subsystems.size(); ++i) {
            if (r >= model.output_offset[i]) owner = static_cast<Index>(i);
        }
        const Index row = rb.add(owner, 0.0, 0.0);
        rb.set(row, L.ys() + r, 1.0);
        for (Index c = 0; c < n; ++c) rb.set(row, L.zs() + c, -model.C(r, c));
    }
    for (int t = 0; t < N; ++t) {
        const Polytope& z = sets.state[static_cast<std::size_t>(t)];
        for (Index j = 0; j < z.rows(); ++j) {
            const Index row = rb.add(model.state_row_owner[static_cast<std::size_t>(j)], -kInf, z.h(j));
            for (Index c = 0; c < n; ++c) rb.set(row, L.z(t) + c, z.H(j, c));
        }
    }
    for (int t = 0; t < N; ++t) {
        const Polytope& v = sets.input[static_cast<std::size_t>(t)];
        for (Index j = 0; j < v.rows(); ++j) {
            const Index row = rb.add(model.input_row_owner[static_cast<std::size_t>(j)], -kInf, v.h(j));
            for (Index c = 0; c < m; ++c) rb.set(row, L.v(t) + c, v.H(j, c));
        }
    }
    spec.terminal_row = static_cast<Index>(rb.coeffs.size());
    for (Index r = 0; r < n; ++r) {
        const Index row = rb.add(kCoordinator, -kInf, kInf);
        rb.set(row, L.z(N) + r, 1.0);
        rb.set(row, L.zs() + r, -1.0);
    }
    for (Index r = 0; r < n; ++r) rb.set(rb.add(kCoordinator, -kInf, kInf), L.zs() + r, 1.0);
    for (Index r = 0; r < m; ++r) rb.set(rb.add(kCoordinator, -kInf, kInf), L.vs() + r, 1.0);

    const auto rows = static_cast<Index>(rb.coeffs.size());
    spec.qp.constraints = Matrix::Zero(rows, L.size());
    spec.qp.lower.resize(rows);
    spec.qp.upper.resize(rows);
    for (Index r = 0; r < rows; ++r) {
        for (const auto& [c, v] : rb.coeffs[static_cast<std::size_t>(r)]) spec.qp.constraints(r, c) = v;
        spec.qp.lower(r) = rb.lower[static_cast<std::size_t>(r)];
        spec.qp.upper(r) = rb.upper[static_cast<std::size_t>(r)];
    }
    spec.row_owner = rb.owner;
    spec.qp.ellipsoids.push_back({spec.terminal_row, 2 * n + m, terminal.shape, 1.0});
    spec.qp.validate();
    return spec;
}

void set_reference(OcpSpec& spec, const Vector& y_ref) {
    if (y_ref.size() != spec.layout.l) throw Error(ErrorCode::DimensionMismatch, kModule, "reference has wrong dimension");
    spec.y_ref = y_ref;
    for (auto& t : spec.terms) {
        if (t.reference) t.g = y_ref.segment(t.reference_offset, t.g.size());
    }
    const Matrix cost = spec.qp.cost;
    assemble_cost(spec);
    spec.qp.cost = cost;
}

void set_initial_state(OcpSpec& spec, const Vector& z_init) {
    if (z_init.size() != spec.layout.n) throw Error(ErrorCode::DimensionMismatch, kModule, "initial state has wrong dimension");
    spec.qp.lower.head(spec.initial_rows) = z_init;
    spec.qp.upper.head(spec.initial_rows) = z_init;
}

OcpSolution unpack_solution(const OcpSpec& spec, const Vector& x) {
    const OcpLayout& L = spec.layout;
    OcpSolution sol;
    sol.x = x;
    for (int t = 0; t <= L.horizon; ++t) sol.z.push_back(x.segment(L.z(t), L.n));
    for (int t = 0; t < L.horizon; ++t) sol.v.push_back(x.segment(L.v(t), L.m));
    sol.z_s = x.segment(L.zs(), L.n);
    sol.v_s = x.segment(L.vs(), L.m);
    sol.y_s = x.segment(L.ys(), L.l);
    sol.objective = ocp_objective(spec, x);
    return sol;
}

double ocp_objective(const OcpSpec& spec, const Vector& x) { return spec.qp.objective(x) + spec.constant; }

double constraint_violation(const OcpSpec& spec, const Vector& x, const Vector& z_init) {
    const Vector ax = spec.qp.constraints * x;
    double worst = 0.0;
    const Index first_ellipsoid = spec.terminal_row;
    for (Index r = 0; r < first_ellipsoid; ++r) {
        double lo = spec.qp.lower(r), hi = spec.qp.upper(r);
        if (r < spec.initial_rows) lo = hi = z_init(r);
        worst = std::max({worst, lo - ax(r), ax(r) - hi});
    }
    for (const auto& e : spec.qp.ellipsoids) {
        const Vector s = ax.segment(e.first_row, e.size);
        worst = std::max(worst, s.dot(e.shape * s) - e.level);
    }
    return worst;
}

Vector shift_solution(const OcpSpec& spec, const OcpSolution& prev) {
    const OcpLayout& L = spec.layout;
    const int N = L.horizon;
    Vector x = prev.x;
    const Vector v_tail = prev.v_s + spec.K * (prev.z[static_cast<std::size_t>(N)] - prev.z_s);
    for (int t = 0; t < N; ++t) x.segment(L.z(t), L.n) = prev.z[static_cast<std::size_t>(t + 1)];
    x.segment(L.z(N), L.n) = spec.A * prev.z[static_cast<std::size_t>(N)] + spec.B * v_tail;
    for (int t = 0; t + 1 < N; ++t) x.segment(L.v(t), L.m) = prev.v[static_cast<std::size_t>(t + 1)];
    x.segment(L.v(N - 1), L.m) = v_tail;
    return x;
}

bool initial_state_admissible(const OcpSpec& spec, const Vector& x, double tol) { return spec.stage0.contains(x, tol); }

DistributedOcp decompose(const OcpSpec& spec) {
    const auto M = static_cast<std::size_t>(spec.num_subsystems());
    const Index nv = spec.layout.size();
    DistributedOcp out;
    std::vector<std::set<Index>> vars(M + 1);
    std::vector<std::vector<Index>> rows(M + 1);
    std::vector<std::vector<std::size_t>> terms(M + 1);
    for (Index v = 0; v < nv; ++v) vars[static_cast<std::size_t>(spec.var_subsystem[static_cast<std::size_t>(v)])].insert(v);

    auto row_vars = [&](Index r) {
        std::vector<Index> vs;
        for (Index c = 0; c < nv; ++c) {
            if (spec.qp.constraints(r, c) != 0.0) vs.push_back(c);
        }
        return vs;
    };
    const Index total_rows = spec.qp.num_rows();
    Index r = 0;
    while (r < total_rows) {
        // Ellipsoid blocks travel as one group.
        Index count = 1;
        for (const auto& e : spec.qp.ellipsoids) {
            if (e.first_row == r) count = e.size;
        }
        std::vector<Index> group_vars;
        for (Index k = 0; k < count; ++k) {
            const auto rv = row_vars(r + k);
            group_vars.insert(group_vars.end(), rv.begin(), rv.end());
        }
        const Index agent = covering_agent(spec, support(spec, group_vars), spec.row_owner[static_cast<std::size_t>(r)]);
        for (Index k = 0; k < count; ++k) rows[static_cast<std::size_t>(agent)].push_back(r + k);
        vars[static_cast<std::size_t>(agent)].insert(group_vars.begin(), group_vars.end());
        r += count;
    }
    for (std::size_t ti = 0; ti < spec.terms.size(); ++ti) {
        const CostTerm& t = spec.terms[ti];
        const Index agent = covering_agent(spec, support(spec, t.variables), t.owner);
        terms[static_cast<std::size_t>(agent)].push_back(ti);
        vars[static_cast<std::size_t>(agent)].insert(t.variables.begin(), t.variables.end());
    }
    out.has_coordinator = !rows[M].empty() || !terms[M].empty();
    const std::size_t agents = out.has_coordinator ? M + 1 : M;

    std::vector<std::vector<Index>> local_vars;
    for (std::size_t a = 0; a < agents; ++a) local_vars.emplace_back(vars[a].begin(), vars[a].end());
    for (std::size_t a = 0; a < agents; ++a) {
        const auto& lv = local_vars[a];
        const auto size = static_cast<Index>(lv.size());
        auto local_index = [&](Index g) { return static_cast<Index>(std::lower_bound(lv.begin(), lv.end(), g) - lv.begin()); };
        LocalProblem lp;
        lp.variables = lv;
        lp.qp.cost = Matrix::Zero(size, size);
        for (std::size_t ti : terms[a]) {
            const CostTerm& t = spec.terms[ti];
            const Matrix h = 2.0 * t.G.transpose() * t.W * t.G;
            for (std::size_t i = 0; i < t.variables.size(); ++i) {
                for (std::size_t j = 0; j < t.variables.size(); ++j) {
                    lp.qp.cost(local_index(t.variables[i]), local_index(t.variables[j])) +=
                        h(static_cast<Index>(i), static_cast<Index>(j));
                }
            }
        }
        const auto& ar = rows[a];
        const auto nr = static_cast<Index>(ar.size());
        lp.qp.constraints = Matrix::Zero(nr, size);
        lp.qp.lower.resize(nr);
        lp.qp.upper.resize(nr);
        for (Index k = 0; k < nr; ++k) {
            const Index g = ar[static_cast<std::size_t>(k)];
            for (std::size_t c = 0; c < lv.size(); ++c) lp.qp.constraints(k, static_cast<Index>(c)) = spec.qp.constraints(g, lv[c]);
            lp.qp.lower(k) = spec.qp.lower(g);
            lp.qp.upper(k) = spec.qp.upper(g);
            for (const auto& e : spec.qp.ellipsoids) {
                if (e.first_row == g) lp.qp.ellipsoids.push_back({k, e.size, e.shape, e.level});
            }
        }
        out.agents.push_back(std::move(lp));
        out.agent_rows.push_back(ar);
        out.agent_terms.push_back(terms[a]);
    }
    for (std::size_t a = 0; a < agents; ++a) out.agents[a].qp.linear = local_linear(spec, out, a);

    std::vector<int> owner(static_cast<std::size_t>(nv));
    for (Index v = 0; v < nv; ++v) owner[static_cast<std::size_t>(v)] = static_cast<int>(spec.var_subsystem[static_cast<std::size_t>(v)]);
    out.topology = ConsensusTopology::build(nv, local_vars, owner);
    std::vector<std::vector<int>> allowed(agents);
    for (std::size_t i = 0; i < M; ++i) {
        for (Index j : spec.neighbors[i]) allowed[i].push_back(static_cast<int>(j));
        if (out.has_coordinator) allowed[i].push_back(static_cast<int>(M));
    }
    if (out.has_coordinator) {
        for (std::size_t j = 0; j < M; ++j) allowed[M].push_back(static_cast<int>(j));
    }
    out.topology.validate(allowed);
    return out;
}

OcpSolver::OcpSolver(OcpSpec spec, Backend backend, const SolverSettings& settings)
    : spec_(std::move(spec)), backend_(backend) {
    if (backend_ == Backend::Centralized) {
        central_.emplace(spec_.qp, settings);
    } else {
        split_ = decompose(spec_);
        distributed_.emplace(split_.agents, split_.topology, settings);
    }
}

void OcpSolver::set_reference(const Vector& y_ref) {
    dsmpc::set_reference(spec_, y_ref);
    if (central_) {
        central_->update_linear(spec_.qp.linear);
    } else {
        for (std::size_t a = 0; a < split_.agents.size(); ++a) {
            split_.agents[a].qp.linear = local_linear(spec_, split_, a);
            distributed_->update_linear(a, split_.agents[a].qp.linear);
        }
    }
}

OcpSolution OcpSolver::solve(const Vector& z_init, const Vector* warm) {
    set_initial_state(spec_, z_init);
    Vector x, y;
    SolveStatus status;
    int iterations = 0;
    bool polished = false;
    if (central_) {
        central_->update_bounds(spec_.qp.lower, spec_.qp.upper);
        if (warm != nullptr) central_->warm_start(*warm);
        SolveResult res = central_->solve();
        x = std::move(res.x);
        y = std::move(res.y);
        status = res.status;
        iterations = res.iterations;
        polished = res.polished;
    } else {
        for (std::size_t a = 0; a < split_.agents.size(); ++a) {
            const auto& ar = split_.agent_rows[a];
            if (ar.empty()) continue;
            Vector lo(static_cast<Index>(ar.size())), hi(static_cast<Index>(ar.size()));
            for (std::size_t k = 0; k < ar.size(); ++k) {
                lo(static_cast<Index>(k)) = spec_.qp.lower(ar[k]);
                hi(static_cast<Index>(k)) = spec_.qp.upper(ar[k]);
            }
            distributed_->update_bounds(a, lo, hi);
        }
        if (warm != nullptr) distributed_->warm_start(*warm);
        DistributedResult res = distributed_->solve();
        x = std::move(res.x);
        y = Vector::Zero(spec_.qp.num_rows());
        for (std::size_t a = 0; a < split_.agents.size(); ++a) {
            const auto& ar = split_.agent_rows[a];
            for (std::size_t k = 0; k < ar.size(); ++k) y(ar[k]) = res.duals[a](static_cast<Index>(k));
        }
        status = res.status;
        iterations = res.iterations;
    }
    OcpSolution sol = unpack_solution(spec_, x);
    sol.y = std::move(y);
    sol.status = status;
    sol.iterations = iterations;
    sol.polished = polished;
    sol.residuals = qp_residuals(spec_.qp, sol.x, sol.y);
    return sol;
}

OcpSolution solve_ocp(const OcpSpec& spec, const Vector& z_init, Backend backend, const SolverSettings& settings,
                      const Vector* warm) {
    OcpSolver solver(spec, backend, settings);
    return solver.solve(z_init, warm);
}

bool mode1_failed(const OcpSolution& sol) {
    return sol.status == SolveStatus::Infeasible ||
           (sol.status == SolveStatus::MaxIter && sol.residuals.primal > kMode1ResidualLimit);
}

std::string dump_ocp(const OcpSpec& spec) {
    std::ostringstream os;
    os << std::setprecision(17);
    const auto write = [&](const char* name, const Matrix& m) {
        os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
            os << '\n';
        }
    };
    os << "# horizon " << spec.layout.horizon << " n " << spec.layout.n << " m " << spec.layout.m << " l "
       << spec.layout.l << "\n# objective 0.5 x'Px + q'x + constant, lower <= Ax <= upper\n";
    os << "constant " << spec.constant << '\n';
    write("P", spec.qp.cost);
    write("q", spec.qp.linear.transpose());
    write("A", spec.qp.constraints);
    write("lower", spec.qp.lower.transpose());
    write("upper", spec.qp.upper.transpose());
    for (const auto& e : spec.qp.ellipsoids) {
        os << "ellipsoid " << e.first_row << ' ' << e.size << ' ' << e.level << '\n';
        write("shape", e.shape);
    }
    return os.str();
}

}  // namespace dsmpc
