#include "dsmpc/uncertainty.hpp"

#include "dsmpc/chi_squared.hpp"
#include "dsmpc/error.hpp"
#include "dsmpc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace dsmpc {
namespace {

constexpr const char* kModule = "uncertainty";

void check_probability(Index n, double p) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, kModule, "dimension must be at least 1");
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::InvalidProbability, kModule, "probability " + std::to_string(p) + " not in (0,1)");
    }
}

std::vector<Matrix> neighborhood_blocks(const BlockRecursion& rec, const std::vector<Matrix>& blocks, std::size_t i) {
    std::vector<Matrix> out;
    for (Index j : rec.neighbors[i]) out.push_back(blocks[static_cast<std::size_t>(j)]);
    return out;
}

std::vector<Matrix> bound_step(const BlockRecursion& rec, const std::vector<Matrix>& blocks) {
    std::vector<Matrix> next(rec.size());
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const auto nb = neighborhood_blocks(rec, blocks, i);
        const Matrix s = block_diagonal(nb);
        const auto scale = static_cast<double>(rec.neighbors[i].size());
        const Matrix& a = rec.local_closed_loop[i];
        next[i] = symmetrized(scale * a * s * a.transpose() + rec.noise[i]);
    }
    return next;
}

// Pontryagin difference with a per-row box; rows flagged nominal keep their offset.
Polytope tighten_rows(const Polytope& set, const Vector& diag, const Vector& gammas, const std::vector<bool>& nominal,
                      const std::string& what) {
    Polytope out = set;
    for (Index j = 0; j < set.rows(); ++j) {
        if (nominal[static_cast<std::size_t>(j)]) continue;
        const double gamma = gammas(j);
        double shrink = 0.0;
        for (Index c = 0; c < set.dim(); ++c) {
            if (set.H(j, c) != 0.0) shrink += std::abs(set.H(j, c)) * std::sqrt(gamma * std::max(diag(c), 0.0));
        }
        out.h(j) -= shrink;
    }
    if (out.rows() > 0 && !is_feasible(out.H, out.h)) {
        Index worst = 0;
        out.h.minCoeff(&worst);
        throw Error(ErrorCode::EmptyTightenedSet, kModule,
                    what + " is empty after tightening (smallest offset " + std::to_string(out.h(worst)) + " at row " +
                        std::to_string(worst) + ")");
    }
    return out;
}

Vector checked_diagonal(const Matrix& sigma) {
    const Vector d = sigma.diagonal();
    for (Index j = 0; j < d.size(); ++j) {
        if (d(j) < -1e-12) {
            throw Error(ErrorCode::NegativeDiagonal, kModule,
                        "covariance diagonal " + std::to_string(j) + " is " + std::to_string(d(j)));
        }
    }
    return d;
}

}  // namespace

BlockRecursion BlockRecursion::from_model(const NetworkModel& model) {
    BlockRecursion rec;
    for (Index i = 0; i < model.num_subsystems(); ++i) {
        const auto& s = model.subsystems[static_cast<std::size_t>(i)];
        rec.neighbors.push_back(s.neighbors);
        rec.block_dims.push_back(s.state_dim);
        rec.local_closed_loop.push_back(model.local_closed_loop(i));
        rec.noise.push_back(s.noise_cov);
    }
    return rec;
}

std::vector<Matrix> propagate_exact(const Matrix& a_k, const Matrix& w, int horizon) {
    std::vector<Matrix> out;
    out.push_back(Matrix::Zero(a_k.rows(), a_k.rows()));
    for (int t = 0; t < horizon; ++t) out.push_back(symmetrized(a_k * out.back() * a_k.transpose() + w));
    return out;
}

std::vector<std::vector<Matrix>> propagate_distributed(const BlockRecursion& rec, int horizon) {
    std::vector<std::vector<Matrix>> out(1);
    for (std::size_t i = 0; i < rec.size(); ++i) out[0].push_back(Matrix::Zero(rec.block_dims[i], rec.block_dims[i]));
    for (int t = 0; t < horizon; ++t) out.push_back(bound_step(rec, out.back()));
    return out;
}

Matrix steady_state_cov(const Matrix& a_k, const Matrix& w, double tol) {
    const double rho = spectral_radius(a_k);
    if (!(rho < 1.0)) {
        throw Error(ErrorCode::NotSchurStable, kModule, "closed loop has spectral radius " + std::to_string(rho));
    }
    SteinSolution sol = solve_stein(a_k, w, tol, 200);
    if (!sol.converged) {
        throw Error(ErrorCode::NotSchurStable, kModule,
                    "steady-state covariance residual " + std::to_string(sol.residual) + " above tolerance");
    }
    return sol.value;
}

std::vector<Matrix> steady_state_cov_distributed(const BlockRecursion& rec, double tol) {
    // The bound recursion is linear in the stacked block entries: s+ = L s + w.
    std::vector<Index> offset;
    Index dim = 0;
    for (Index d : rec.block_dims) {
        offset.push_back(dim);
        dim += d * d;
    }
    Matrix op = Matrix::Zero(dim, dim);
    Vector w(dim);
    double scaled_radius = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const Index ni = rec.block_dims[i];
        const Matrix& a = rec.local_closed_loop[i];
        const auto scale = static_cast<double>(rec.neighbors[i].size());
        w.segment(offset[i], ni * ni) = Eigen::Map<const Vector>(rec.noise[i].data(), ni * ni);
        Index col = 0;
        Matrix a_own = Matrix::Zero(ni, ni);
        for (Index j : rec.neighbors[i]) {
            const auto uj = static_cast<std::size_t>(j);
            const Index nj = rec.block_dims[uj];
            const Matrix aij = a.middleCols(col, nj);
            if (j == static_cast<Index>(i)) a_own = aij;
            for (Index q = 0; q < nj; ++q) {
                for (Index p = 0; p < nj; ++p) {
                    // contribution of entry (p, q) of block j, column-major index p + q nj
                    const Matrix contrib = scale * aij.col(p) * aij.col(q).transpose();
                    op.block(offset[i], offset[uj] + p + q * nj, ni * ni, 1) +=
                        Eigen::Map<const Vector>(contrib.data(), ni * ni);
                }
            }
            col += nj;
        }
        scaled_radius = std::max(scaled_radius, std::sqrt(scale) * spectral_radius_of(a_own));
    }
    const double op_radius = spectral_radius_of(op);
    if (!(op_radius < 1.0 - kStabilityMargin)) {
        throw Error(ErrorCode::DistributedBoundDiverges, kModule,
                    "neighbourhood covariance bound diverges: operator spectral radius " + std::to_string(op_radius) +
                        ", largest sqrt(|N_i|)-scaled local radius " + std::to_string(scaled_radius) +
                        "; redesign K");
    }
    const Vector s = (Matrix::Identity(dim, dim) - op).fullPivLu().solve(w);
    std::vector<Matrix> blocks(rec.size());
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const Index ni = rec.block_dims[i];
        blocks[i] = symmetrized(Eigen::Map<const Matrix>(s.data() + offset[i], ni, ni));
    }
    for (int polish = 0; polish < 8; ++polish) {
        const auto next = bound_step(rec, blocks);
        double res = 0.0;
        for (std::size_t i = 0; i < rec.size(); ++i) res = std::max(res, max_abs(next[i] - blocks[i]));
        if (res <= tol) break;
        blocks = next;
    }
    return blocks;
}

Matrix assemble_blocks(const std::vector<Matrix>& blocks) { return block_diagonal(blocks); }

double chebyshev_gamma(Index n, double p) {
    check_probability(n, p);
    return static_cast<double>(n) / (1.0 - p);
}

double gaussian_gamma(Index n, double p) {
    check_probability(n, p);
    return chi_squared_quantile(static_cast<double>(n), p, 1e-10);
}

PrsBox prs_box(const Matrix& sigma, double gamma) {
    if (!(gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, kModule, "gamma must be nonnegative");
    const Vector d = checked_diagonal(sigma);
    PrsBox box;
    box.radii = (gamma * d.cwiseMax(0.0)).cwiseSqrt();
    return box;
}

Polytope tighten(const Polytope& set, const PrsBox& box) {
    if (box.radii.size() != set.dim()) throw Error(ErrorCode::DimensionMismatch, kModule, "box and polytope dimensions differ");
    Polytope out = set;
    out.h -= set.H.cwiseAbs() * box.radii;
    if ((out.h.array() < -1e-12).any() && !is_feasible(out.H, out.h)) {
        Index worst = 0;
        out.h.minCoeff(&worst);
        throw Error(ErrorCode::EmptyTightenedSet, kModule,
                    "tightened set is empty (row " + std::to_string(worst) + " offset " + std::to_string(out.h(worst)) + ")");
    }
    return out;
}

std::string_view to_string(GammaPolicy policy) {
    return policy == GammaPolicy::Global ? "global" : "per-constraint";
}

GammaPolicy parse_gamma_policy(std::string_view text) {
    if (text == "global") return GammaPolicy::Global;
    if (text == "per-constraint") return GammaPolicy::PerConstraint;
    throw Error(ErrorCode::InvalidArgument, kModule, "unknown gamma policy '" + std::string(text) + "'");
}

CovarianceSchedule build_covariance_schedule(const NetworkModel& model, double tol) {
    CovarianceSchedule sched;
    sched.horizon = model.horizon;
    const Matrix a_k = model.closed_loop();
    sched.exact = propagate_exact(a_k, model.noise_cov, model.horizon);
    const BlockRecursion rec = BlockRecursion::from_model(model);
    for (const auto& blocks : propagate_distributed(rec, model.horizon)) sched.bounded.push_back(assemble_blocks(blocks));
    sched.exact_steady = steady_state_cov(a_k, model.noise_cov, tol);
    sched.bounded_steady = assemble_blocks(steady_state_cov_distributed(rec, tol));
    const Matrix& k = model.K;
    for (const auto& s : sched.exact) sched.input_exact.push_back(symmetrized(k * s * k.transpose()));
    for (const auto& s : sched.bounded) sched.input_bounded.push_back(symmetrized(k * s * k.transpose()));
    sched.input_exact_steady = symmetrized(k * sched.exact_steady * k.transpose());
    sched.input_bounded_steady = symmetrized(k * sched.bounded_steady * k.transpose());
    return sched;
}

Vector row_gammas(const NetworkModel& model, bool state_rows, GammaPolicy policy) {
    const Polytope& set = state_rows ? model.state_set : model.input_set;
    const auto& owner = state_rows ? model.state_row_owner : model.input_row_owner;
    const auto& nominal = state_rows ? model.state_row_nominal : model.input_row_nominal;
    auto gamma_fn = [&](Index n, double p) {
        return model.distribution == Distribution::Gaussian ? gaussian_gamma(n, p) : chebyshev_gamma(n, p);
    };
    auto level = [&](Index i) {
        const auto& s = model.subsystems[static_cast<std::size_t>(i)];
        return state_rows ? s.p_x : s.p_u;
    };
    Vector out = Vector::Zero(set.rows());
    if (policy == GammaPolicy::Global) {
        double p = 0.0;
        for (Index i = 0; i < model.num_subsystems(); ++i) p = std::max(p, level(i));
        const double g = gamma_fn(set.dim(), p);
        for (Index j = 0; j < set.rows(); ++j) {
            if (!nominal[static_cast<std::size_t>(j)]) out(j) = g;
        }
        return out;
    }
    for (Index i = 0; i < model.num_subsystems(); ++i) {
        std::set<Index> coords;
        for (Index j = 0; j < set.rows(); ++j) {
            if (owner[static_cast<std::size_t>(j)] != i || nominal[static_cast<std::size_t>(j)]) continue;
            for (Index c = 0; c < set.dim(); ++c) {
                if (set.H(j, c) != 0.0) coords.insert(c);
            }
        }
        if (coords.empty()) continue;
        const double g = gamma_fn(static_cast<Index>(coords.size()), level(i));
        for (Index j = 0; j < set.rows(); ++j) {
            if (owner[static_cast<std::size_t>(j)] == i && !nominal[static_cast<std::size_t>(j)]) out(j) = g;
        }
    }
    return out;
}

TightenedSets build_tightened_sets(const NetworkModel& model, const CovarianceSchedule& schedule, GammaPolicy policy) {
    if (static_cast<int>(schedule.bounded.size()) < model.horizon + 1) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "covariance schedule shorter than the horizon");
    }
    TightenedSets sets;
    sets.state_gamma = row_gammas(model, true, policy);
    sets.input_gamma = row_gammas(model, false, policy);
    for (int t = 0; t < model.horizon; ++t) {
        const auto ts = std::to_string(t);
        sets.state.push_back(tighten_rows(model.state_set, checked_diagonal(schedule.bounded[static_cast<std::size_t>(t)]),
                                          sets.state_gamma, model.state_row_nominal, "state set at stage " + ts));
        sets.input.push_back(tighten_rows(model.input_set,
                                          checked_diagonal(schedule.input_bounded[static_cast<std::size_t>(t)]),
                                          sets.input_gamma, model.input_row_nominal, "input set at stage " + ts));
    }
    sets.state_terminal = tighten_rows(model.state_set, checked_diagonal(schedule.bounded_steady), sets.state_gamma,
                                       model.state_row_nominal, "terminal state set");
    sets.input_terminal = tighten_rows(model.input_set, checked_diagonal(schedule.input_bounded_steady),
                                       sets.input_gamma, model.input_row_nominal, "terminal input set");
    return sets;
}

}  // namespace dsmpc
