#include "dsmpc/synthesis.hpp"

#include "dsmpc/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dsmpc {
namespace {

constexpr const char* kModule = "synthesis";
constexpr double kCertificateTol = 1e-9;

// Smallest row half-width along each coordinate; 1 where no row touches it.
Vector half_widths(const Polytope& set) {
    Vector b = Vector::Constant(set.dim(), std::numeric_limits<double>::infinity());
    for (Index j = 0; j < set.rows(); ++j) {
        for (Index c = 0; c < set.dim(); ++c) {
            if (set.H(j, c) != 0.0) b(c) = std::min(b(c), set.h(j) / std::abs(set.H(j, c)));
        }
    }
    for (Index c = 0; c < b.size(); ++c) {
        if (!std::isfinite(b(c)) || !(b(c) > 0.0)) b(c) = 1.0;
    }
    return b;
}

}  // namespace

double off_block_mass(const Matrix& p, const std::vector<Index>& block_dims) {
    const double total = p.squaredNorm();
    if (total == 0.0) return 0.0;
    double inside = 0.0;
    Index off = 0;
    for (Index d : block_dims) {
        inside += p.block(off, off, d, d).squaredNorm();
        off += d;
    }
    return std::max(0.0, (total - inside) / total);
}

LyapunovCost solve_lyapunov_cost(const Matrix& a_k, const Matrix& q, const Matrix& r, const Matrix& k, double tol) {
    const double rho = spectral_radius(a_k);
    if (!(rho < 1.0)) {
        throw Error(ErrorCode::NotSchurStable, kModule, "closed loop has spectral radius " + std::to_string(rho));
    }
    const Matrix w = symmetrized(q + k.transpose() * r * k);
    SteinSolution sol = solve_stein(a_k.transpose(), w, tol * std::max(1.0, max_abs(w)), 200);
    LyapunovCost out;
    out.P = std::move(sol.value);
    out.residual = max_abs(a_k.transpose() * out.P * a_k - out.P + w);
    return out;
}

Matrix augmented_closed_loop(const Matrix& a_k, Index m) {
    const Index n = a_k.rows();
    Matrix a = Matrix::Identity(2 * n + m, 2 * n + m);
    a.topLeftCorner(n, n) = a_k;
    return a;
}

TerminalSet build_terminal_set(const Matrix& a_k, const Matrix& k, const Matrix& p_f, const Matrix& p_z,
                               const Matrix& p_v, const Polytope& z_f, const Polytope& v_f) {
    const Index n = a_k.rows();
    const Index m = k.rows();
    if (p_f.rows() != n || p_z.rows() != n || p_v.rows() != m || k.cols() != n || z_f.dim() != n || v_f.dim() != m) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "terminal-set data sizes are inconsistent");
    }
    TerminalSet ts;
    ts.n = n;
    ts.m = m;
    ts.p_f = symmetrized(p_f);
    ts.p_z = symmetrized(p_z);
    ts.p_v = symmetrized(p_v);
    const Matrix p_tr = block_diagonal(std::vector<Matrix>{ts.p_f, ts.p_z, ts.p_v});
    if (min_eigenvalue(p_tr) <= 0.0) throw Error(ErrorCode::NotPD, kModule, "terminal shape is not positive definite");

    const Matrix a_cl = augmented_closed_loop(a_k, m);
    ts.invariance_margin = min_eigenvalue(p_tr - a_cl.transpose() * p_tr * a_cl);
    if (ts.invariance_margin < -kCertificateTol) {
        throw Error(ErrorCode::InvarianceCertificateFailed, kModule,
                    "P_tr - A_cl^T P_tr A_cl has eigenvalue " + std::to_string(ts.invariance_margin));
    }

    const Eigen::LLT<Matrix> chol(p_tr);
    std::vector<Vector> rows;
    std::vector<double> offsets;
    for (Index j = 0; j < z_f.rows(); ++j) {
        Vector g = Vector::Zero(2 * n + m);
        g.head(n) = z_f.H.row(j).transpose();
        g.segment(n, n) = z_f.H.row(j).transpose();
        rows.push_back(g);
        offsets.push_back(z_f.h(j));
    }
    for (Index j = 0; j < v_f.rows(); ++j) {
        Vector g = Vector::Zero(2 * n + m);
        g.head(n) = (v_f.H.row(j) * k).transpose();
        g.tail(m) = v_f.H.row(j).transpose();
        rows.push_back(g);
        offsets.push_back(v_f.h(j));
    }
    double lambda = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (!(offsets[j] > 0.0)) {
            throw Error(ErrorCode::DegenerateConstraint, kModule,
                        "tightened row " + std::to_string(j) + " has offset " + std::to_string(offsets[j]) +
                            "; the zero steady state is not interior");
        }
        const double support = std::sqrt(rows[j].dot(chol.solve(rows[j])));
        if (support > 0.0) lambda = std::min(lambda, offsets[j] / support);
    }
    if (!std::isfinite(lambda)) lambda = 1.0;
    ts.lambda = lambda;
    ts.shape = p_tr / (lambda * lambda);

    const Eigen::LLT<Matrix> scaled(ts.shape);
    ts.admissibility_margin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const double support = std::sqrt(rows[j].dot(scaled.solve(rows[j])));
        ts.admissibility_margin = std::min(ts.admissibility_margin, offsets[j] - support);
    }
    if (rows.empty()) ts.admissibility_margin = 0.0;
    return ts;
}

TerminalSet build_terminal_set(const NetworkModel& model, const Matrix& p_f, const TightenedSets& sets,
                               TerminalShape shape) {
    Matrix p_z = Matrix::Identity(model.n, model.n);
    Matrix p_v = Matrix::Identity(model.m, model.m);
    if (shape == TerminalShape::Box) {
        p_z = half_widths(sets.state_terminal).cwiseAbs2().cwiseInverse().asDiagonal();
        p_v = half_widths(sets.input_terminal).cwiseAbs2().cwiseInverse().asDiagonal();
    }
    TerminalSet ts =
        build_terminal_set(model.closed_loop(), model.K, p_f, p_z, p_v, sets.state_terminal, sets.input_terminal);
    ts.levels.assign(model.subsystems.size(), 1.0 / static_cast<double>(model.subsystems.size()));
    return ts;
}

SteadyStateOracle make_steady_state_oracle(const NetworkModel& model, const TightenedSets& sets,
                                           const TerminalSet* terminal) {
    SteadyStateOracle o;
    o.A = model.A;
    o.B = model.B;
    o.C = model.C;
    o.T = model.T;
    o.z_f = sets.state_terminal;
    o.v_f = sets.input_terminal;
    if (terminal != nullptr) o.slice = terminal->slice();
    const Index n = model.n, m = model.m, l = model.l;
    Matrix eq = Matrix::Zero(n + l, n + m);
    eq.topLeftCorner(n, n) = model.A - Matrix::Identity(n, n);
    eq.topRightCorner(n, m) = model.B;
    eq.bottomLeftCorner(l, n) = model.C;
    Eigen::FullPivLU<Matrix> lu(eq);
    o.full_row_rank = lu.rank() == n + l;
    return o;
}

SteadyState admissible_steady_state(const Vector& y_ref, const SteadyStateOracle& o) {
    const Index n = o.A.rows(), m = o.B.cols(), l = o.C.rows();
    if (y_ref.size() != l) throw Error(ErrorCode::DimensionMismatch, kModule, "reference has wrong dimension");
    ConicQp qp;
    qp.cost = Matrix::Zero(n + m, n + m);
    qp.cost.topLeftCorner(n, n) = 2.0 * o.C.transpose() * o.T * o.C;
    qp.linear = Vector::Zero(n + m);
    qp.linear.head(n) = -2.0 * o.C.transpose() * o.T * y_ref;
    const Index slice_rows = o.slice ? n + m : 0;
    const Index rows = n + o.z_f.rows() + o.v_f.rows() + slice_rows;
    qp.constraints = Matrix::Zero(rows, n + m);
    qp.lower = Vector::Constant(rows, -kInf);
    qp.upper = Vector::Constant(rows, kInf);
    qp.constraints.block(0, 0, n, n) = o.A - Matrix::Identity(n, n);
    qp.constraints.block(0, n, n, m) = o.B;
    qp.lower.head(n).setZero();
    qp.upper.head(n).setZero();
    Index r = n;
    qp.constraints.block(r, 0, o.z_f.rows(), n) = o.z_f.H;
    qp.upper.segment(r, o.z_f.rows()) = o.z_f.h;
    r += o.z_f.rows();
    qp.constraints.block(r, n, o.v_f.rows(), m) = o.v_f.H;
    qp.upper.segment(r, o.v_f.rows()) = o.v_f.h;
    r += o.v_f.rows();
    if (o.slice) {
        qp.constraints.block(r, 0, n + m, n + m).setIdentity();
        qp.ellipsoids.push_back({r, n + m, *o.slice, 1.0});
    }
    SolverSettings settings;
    settings.eps_abs = 1e-10;
    settings.eps_rel = 1e-10;
    settings.max_iterations = 200000;
    const SolveResult res = solve_centralized(qp, settings);
    if (res.status == SolveStatus::Infeasible || res.residuals.primal > 1e-6) {
        throw Error(ErrorCode::InfeasibleSteadyStateSet, kModule,
                    "no admissible steady state (solver status " + std::string(to_string(res.status)) + ")");
    }
    SteadyState ss;
    ss.z_s = res.x.head(n);
    ss.v_s = res.x.tail(m);
    ss.y_s = o.C * ss.z_s;
    const Vector e = ss.y_s - y_ref;
    ss.cost = e.dot(o.T * e);
    return ss;
}

}  // namespace dsmpc
