#include "dsmpc/consensus.hpp"

#include "dsmpc/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace dsmpc {
namespace {

constexpr const char* kModule = "solver";
constexpr double kRhoEqScale = 1e3;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double clip_scaling(double v) {
    if (!(v > 1e-4)) return 1.0;
    return std::clamp(v, 1e-4, 1e4);
}

bool is_equality(double lo, double hi) { return std::abs(hi - lo) <= 1e-12 * std::max(1.0, std::abs(hi)); }

// Pairwise reduction, the shape a message-passing implementation would use.
double tree_max(std::vector<double> values) {
    if (values.empty()) return 0.0;
    while (values.size() > 1) {
        std::vector<double> next;
        for (std::size_t i = 0; i + 1 < values.size(); i += 2) next.push_back(std::max(values[i], values[i + 1]));
        if (values.size() % 2 == 1) next.push_back(values.back());
        values = std::move(next);
    }
    return values.front();
}

Vector gather(const Vector& global, const std::vector<Index>& idx) {
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = global(idx[k]);
    return out;
}

}  // namespace

ConsensusTopology ConsensusTopology::build(Index num_variables, std::vector<std::vector<Index>> local_variables,
                                           std::vector<int> owner) {
    ConsensusTopology t;
    t.num_variables = num_variables;
    t.local_variables = std::move(local_variables);
    t.owner = std::move(owner);
    std::vector<std::vector<int>> holders(static_cast<std::size_t>(num_variables));
    for (std::size_t a = 0; a < t.local_variables.size(); ++a) {
        for (Index v : t.local_variables[a]) {
            if (v >= 0 && v < num_variables) holders[static_cast<std::size_t>(v)].push_back(static_cast<int>(a));
        }
    }
    std::set<std::pair<int, int>> edges;
    for (const auto& h : holders) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            for (std::size_t j = i + 1; j < h.size(); ++j) edges.insert({std::min(h[i], h[j]), std::max(h[i], h[j])});
        }
    }
    t.edges.assign(edges.begin(), edges.end());
    return t;
}

void ConsensusTopology::validate(const std::vector<std::vector<int>>& allowed) const {
    if (owner.size() != static_cast<std::size_t>(num_variables)) {
        throw Error(ErrorCode::TopologyMismatch, kModule, "owner list does not cover every variable");
    }
    std::vector<int> count(static_cast<std::size_t>(num_variables), 0);
    for (std::size_t a = 0; a < local_variables.size(); ++a) {
        const auto& vars = local_variables[a];
        if (!std::is_sorted(vars.begin(), vars.end()) || std::adjacent_find(vars.begin(), vars.end()) != vars.end()) {
            throw Error(ErrorCode::TopologyMismatch, kModule, "agent " + std::to_string(a) + " variable list not sorted/unique");
        }
        for (Index v : vars) {
            if (v < 0 || v >= num_variables) {
                throw Error(ErrorCode::TopologyMismatch, kModule, "agent " + std::to_string(a) + " holds an unknown variable");
            }
            ++count[static_cast<std::size_t>(v)];
        }
    }
    for (Index v = 0; v < num_variables; ++v) {
        const int o = owner[static_cast<std::size_t>(v)];
        if (count[static_cast<std::size_t>(v)] == 0 || o < 0 || static_cast<std::size_t>(o) >= local_variables.size()) {
            throw Error(ErrorCode::TopologyMismatch, kModule, "variable " + std::to_string(v) + " has no valid owner");
        }
        const auto& ov = local_variables[static_cast<std::size_t>(o)];
        if (!std::binary_search(ov.begin(), ov.end(), v)) {
            throw Error(ErrorCode::TopologyMismatch, kModule,
                        "owner of variable " + std::to_string(v) + " does not hold a copy");
        }
    }
    if (allowed.empty()) return;
    for (const auto& [i, j] : edges) {
        const auto& ai = allowed[static_cast<std::size_t>(i)];
        if (std::find(ai.begin(), ai.end(), j) == ai.end()) {
            throw Error(ErrorCode::TopologyMismatch, kModule,
                        "agents " + std::to_string(i) + " and " + std::to_string(j) + " share variables but are not neighbours");
        }
    }
}

ConsensusSolver::ConsensusSolver(std::vector<LocalProblem> agents, ConsensusTopology topology, SolverSettings settings)
    : agents_(std::move(agents)), topology_(std::move(topology)), settings_(settings) {
    settings_.validate();
    if (agents_.size() != topology_.num_agents()) {
        throw Error(ErrorCode::TopologyMismatch, kModule, "agent count differs from the topology");
    }
    topology_.validate();
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        agents_[a].qp.validate();
        if (agents_[a].variables != topology_.local_variables[a] ||
            agents_[a].qp.num_variables() != static_cast<Index>(agents_[a].variables.size())) {
            throw Error(ErrorCode::TopologyMismatch, kModule, "agent " + std::to_string(a) + " variables differ from the topology");
        }
    }
    holders_ = Vector::Zero(topology_.num_variables);
    for (const auto& vars : topology_.local_variables) {
        for (Index v : vars) holders_(v) += 1.0;
    }
    rho_ = settings_.rho;
    scale();
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        build_rho(work_[a], agents_[a].qp);
        factorize(work_[a]);
    }
}

void ConsensusSolver::scale() {
    const Index nv = topology_.num_variables;
    work_.assign(agents_.size(), Agent{});
    d_global_ = Vector::Ones(nv);
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        const ConicQp& qp = agents_[a].qp;
        Agent& ag = work_[a];
        ag.p = qp.cost;
        ag.a = qp.constraints;
        ag.e = Vector::Ones(qp.num_rows());
        ag.in_ellipsoid.assign(static_cast<std::size_t>(qp.num_rows()), 0);
        for (const auto& e : qp.ellipsoids) {
            for (Index i = 0; i < e.size; ++i) ag.in_ellipsoid[static_cast<std::size_t>(e.first_row + i)] = 1;
        }
    }
    for (int pass = 0; pass < settings_.scaling_passes; ++pass) {
        Vector norm = Vector::Zero(nv);
        for (std::size_t a = 0; a < agents_.size(); ++a) {
            const Agent& ag = work_[a];
            const auto& vars = agents_[a].variables;
            for (std::size_t k = 0; k < vars.size(); ++k) {
                const auto kk = static_cast<Index>(k);
                double c = ag.p.col(kk).cwiseAbs().maxCoeff();
                if (ag.a.rows() > 0) c = std::max(c, ag.a.col(kk).cwiseAbs().maxCoeff());
                norm(vars[k]) = std::max(norm(vars[k]), c);
            }
        }
        Vector dx(nv);
        for (Index v = 0; v < nv; ++v) dx(v) = clip_scaling(1.0 / std::sqrt(norm(v)));
        for (std::size_t a = 0; a < agents_.size(); ++a) {
            Agent& ag = work_[a];
            const ConicQp& qp = agents_[a].qp;
            const Vector dl = gather(dx, agents_[a].variables);
            Vector dz(ag.a.rows());
            for (Index i = 0; i < ag.a.rows(); ++i) dz(i) = clip_scaling(1.0 / std::sqrt(ag.a.row(i).cwiseAbs().maxCoeff()));
            for (const auto& e : qp.ellipsoids) {
                const double g = std::exp(dz.segment(e.first_row, e.size).array().log().mean());
                dz.segment(e.first_row, e.size).setConstant(g);
            }
            ag.p = dl.asDiagonal() * ag.p * dl.asDiagonal();
            ag.a = dz.asDiagonal() * ag.a * dl.asDiagonal();
            ag.e = ag.e.cwiseProduct(dz);
        }
        d_global_ = d_global_.cwiseProduct(dx);
    }
    double col_sum = 0.0, q_norm = 0.0;
    Index cols = 0;
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        Agent& ag = work_[a];
        ag.d = gather(d_global_, agents_[a].variables);
        for (Index k = 0; k < ag.p.cols(); ++k) col_sum += ag.p.col(k).cwiseAbs().maxCoeff();
        cols += ag.p.cols();
        q_norm = std::max(q_norm, inf_norm(ag.d.cwiseProduct(agents_[a].qp.linear)));
    }
    const double mean_col = cols > 0 ? col_sum / static_cast<double>(cols) : 1.0;
    c_ = clip_scaling(1.0 / std::max({mean_col, q_norm, 1e-4}));
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        Agent& ag = work_[a];
        const ConicQp& qp = agents_[a].qp;
        ag.p *= c_;
        ag.q = c_ * ag.d.cwiseProduct(qp.linear);
        ag.l = ag.e.cwiseProduct(qp.lower);
        ag.u = ag.e.cwiseProduct(qp.upper);
        ag.projectors.clear();
        for (const auto& e : qp.ellipsoids) {
            const double s = ag.e(e.first_row);
            ag.projectors.emplace_back(e.shape / (s * s), e.level);
        }
    }
}

void ConsensusSolver::build_rho(Agent& ag, const ConicQp& qp) const {
    ag.rho_rows.resize(qp.num_rows());
    for (Index i = 0; i < qp.num_rows(); ++i) {
        if (ag.in_ellipsoid[static_cast<std::size_t>(i)]) {
            ag.rho_rows(i) = rho_;
        } else if (std::isinf(qp.lower(i)) && std::isinf(qp.upper(i))) {
            ag.rho_rows(i) = kRhoMin;
        } else if (is_equality(qp.lower(i), qp.upper(i))) {
            ag.rho_rows(i) = kRhoEqScale * rho_;
        } else {
            ag.rho_rows(i) = rho_;
        }
    }
}

void ConsensusSolver::factorize(Agent& ag) const {
    const Index n = ag.p.rows();
    Matrix k = ag.p + (settings_.sigma + rho_) * Matrix::Identity(n, n);
    if (ag.a.rows() > 0) k.noalias() += ag.a.transpose() * ag.rho_rows.asDiagonal() * ag.a;
    ag.kkt.compute(k);
    if (ag.kkt.info() != Eigen::Success) {
        throw Error(ErrorCode::NumericalBreakdown, kModule,
                    "agent factorization failed (min diagonal " + std::to_string(k.diagonal().minCoeff()) + ")");
    }
}

Vector ConsensusSolver::project(const Agent& ag, std::size_t index, const Vector& v) const {
    Vector out = v.cwiseMax(ag.l).cwiseMin(ag.u);
    const auto& ells = agents_[index].qp.ellipsoids;
    for (std::size_t b = 0; b < ells.size(); ++b) {
        out.segment(ells[b].first_row, ells[b].size) = ag.projectors[b].project(v.segment(ells[b].first_row, ells[b].size));
    }
    return out;
}

void ConsensusSolver::update_bounds(std::size_t agent, const Vector& lower, const Vector& upper) {
    ConicQp& qp = agents_.at(agent).qp;
    if (lower.size() != qp.num_rows() || upper.size() != qp.num_rows()) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "bound vector size mismatch");
    }
    qp.lower = lower;
    qp.upper = upper;
    Agent& ag = work_[agent];
    ag.l = ag.e.cwiseProduct(lower);
    ag.u = ag.e.cwiseProduct(upper);
    const Vector old = ag.rho_rows;
    build_rho(ag, qp);
    if (old != ag.rho_rows) factorize(ag);
}

void ConsensusSolver::update_linear(std::size_t agent, const Vector& linear) {
    ConicQp& qp = agents_.at(agent).qp;
    if (linear.size() != qp.num_variables()) throw Error(ErrorCode::DimensionMismatch, kModule, "linear term size mismatch");
    qp.linear = linear;
    work_[agent].q = c_ * work_[agent].d.cwiseProduct(linear);
}

void ConsensusSolver::warm_start(const Vector& x) {
    if (x.size() != topology_.num_variables) throw Error(ErrorCode::DimensionMismatch, kModule, "warm start size mismatch");
    xbar_ = x.cwiseQuotient(d_global_);
    for (std::size_t a = 0; a < agents_.size(); ++a) {
        Agent& ag = work_[a];
        ag.x = gather(xbar_, agents_[a].variables);
        ag.s = project(ag, a, ag.a * ag.x);
        if (ag.y.size() != ag.a.rows()) ag.y = Vector::Zero(ag.a.rows());
        if (ag.lambda.size() != ag.x.size()) ag.lambda = Vector::Zero(ag.x.size());
    }
    has_iterate_ = true;
}

DistributedResult ConsensusSolver::solve() {
    const Index nv = topology_.num_variables;
    const double alpha = settings_.alpha;
    if (!settings_.warm_start || !has_iterate_) {
        xbar_ = Vector::Zero(nv);
        for (auto& ag : work_) {
            ag.x = Vector::Zero(ag.p.rows());
            ag.s = Vector::Zero(ag.a.rows());
            ag.y = Vector::Zero(ag.a.rows());
            ag.lambda = Vector::Zero(ag.p.rows());
        }
    }
    const Vector d_inv = d_global_.cwiseInverse();
    std::vector<Vector> relaxed(work_.size());
    DistributedResult result;
    int next_adapt = settings_.adapt_interval;
    int adapt_gap = settings_.adapt_interval;
    int it = 0;
    for (it = 1; it <= settings_.max_iterations; ++it) {
        // Local subproblems; only the neighbours' copies of shared values enter.
        for (std::size_t a = 0; a < work_.size(); ++a) {
            Agent& ag = work_[a];
            const Vector xbar_loc = gather(xbar_, agents_[a].variables);
            Vector rhs = settings_.sigma * ag.x - ag.q + rho_ * xbar_loc - ag.lambda;
            if (ag.a.rows() > 0) rhs.noalias() += ag.a.transpose() * (ag.rho_rows.cwiseProduct(ag.s) - ag.y);
            ag.x = ag.kkt.solve(rhs);
            relaxed[a] = alpha * ag.x + (1.0 - alpha) * xbar_loc;
            if (ag.a.rows() > 0) {
                const Vector zr = alpha * (ag.a * ag.x) + (1.0 - alpha) * ag.s;
                const Vector s_new = project(ag, a, zr + ag.y.cwiseQuotient(ag.rho_rows));
                ag.y += ag.rho_rows.cwiseProduct(zr - s_new);
                ag.s = s_new;
            }
        }
        // Averaging of every shared value over its holders.
        Vector sum = Vector::Zero(nv);
        for (std::size_t a = 0; a < work_.size(); ++a) {
            const auto& vars = agents_[a].variables;
            const Vector contrib = relaxed[a] + work_[a].lambda / rho_;
            for (std::size_t k = 0; k < vars.size(); ++k) sum(vars[k]) += contrib(static_cast<Index>(k));
        }
        xbar_ = sum.cwiseQuotient(holders_);
        for (std::size_t a = 0; a < work_.size(); ++a) {
            work_[a].lambda += rho_ * (relaxed[a] - gather(xbar_, agents_[a].variables));
        }

        if (it % settings_.check_interval != 0 && it != settings_.max_iterations) continue;

        std::vector<double> prim, prim_scale, dual_scale;
        Vector grad = Vector::Zero(nv);
        for (std::size_t a = 0; a < work_.size(); ++a) {
            const Agent& ag = work_[a];
            const auto& vars = agents_[a].variables;
            const Vector xb = gather(xbar_, vars);
            const Vector e_inv = ag.e.cwiseInverse();
            const Vector ax = ag.a * xb;
            const Vector px = ag.p * xb;
            const Vector aty = ag.a.transpose() * ag.y;
            const Vector g = px + ag.q + aty;
            for (std::size_t k = 0; k < vars.size(); ++k) grad(vars[k]) += g(static_cast<Index>(k));
            prim.push_back(std::max(inf_norm(e_inv.cwiseProduct(ax - ag.s)), inf_norm(ag.d.cwiseProduct(ag.x - xb))));
            prim_scale.push_back(std::max({inf_norm(e_inv.cwiseProduct(ax)), inf_norm(e_inv.cwiseProduct(ag.s)),
                                           inf_norm(ag.d.cwiseProduct(xb))}));
            const Vector dl = ag.d.cwiseInverse();
            dual_scale.push_back(std::max({inf_norm(dl.cwiseProduct(px)), inf_norm(dl.cwiseProduct(aty)),
                                           inf_norm(dl.cwiseProduct(ag.q))}) / c_);
        }
        const double p_res = tree_max(prim);
        const double d_res = inf_norm(d_inv.cwiseProduct(grad)) / c_;
        const double p_scale = tree_max(prim_scale);
        const double d_scale = tree_max(dual_scale);
        result.primal_residual = p_res;
        result.dual_residual = d_res;
        if (settings_.residual_log != nullptr) {
            *settings_.residual_log << it << ',' << p_res << ',' << d_res << ',' << rho_ << '\n';
        }
        if (p_res <= settings_.eps_abs + settings_.eps_rel * p_scale &&
            d_res <= settings_.eps_abs + settings_.eps_rel * d_scale) {
            result.status = SolveStatus::Optimal;
            break;
        }
        // Each penalty change doubles the wait before the next one.
        if (settings_.adaptive_rho && it >= next_adapt) {
            next_adapt = it + adapt_gap;
            const double pn = p_res / std::max(p_scale, 1e-12);
            const double dn = d_res / std::max(d_scale, 1e-12);
            const double rho_new = std::clamp(rho_ * std::sqrt(pn / std::max(dn, 1e-30)), kRhoMin, kRhoMax);
            if (rho_new > 5.0 * rho_ || rho_new < 0.2 * rho_) {
                rho_ = rho_new;
                for (std::size_t a = 0; a < work_.size(); ++a) {
                    build_rho(work_[a], agents_[a].qp);
                    factorize(work_[a]);
                }
                adapt_gap *= 2;
                next_adapt = it + adapt_gap;
            }
        }
    }
    has_iterate_ = true;
    result.iterations = std::min(it, settings_.max_iterations);
    result.x = d_global_.cwiseProduct(xbar_);
    for (const auto& ag : work_) result.duals.push_back(ag.e.cwiseProduct(ag.y) / c_);
    return result;
}

DistributedResult solve_distributed(std::vector<LocalProblem> agents, ConsensusTopology topology,
                                    const SolverSettings& settings) {
    ConsensusSolver solver(std::move(agents), std::move(topology), settings);
    return solver.solve();
}

}  // namespace dsmpc
