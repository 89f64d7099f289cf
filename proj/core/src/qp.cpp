#include "dsmpc/qp.hpp"

#include "dsmpc/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dsmpc {
namespace {

constexpr const char* kModule = "solver";
constexpr double kRhoEqScale = 1e3;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr int kStableChecks = 4;

bool is_equality(double lo, double hi) { return std::abs(hi - lo) <= 1e-12 * std::max(1.0, std::abs(hi)); }

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double clip_scaling(double v) {
    if (!(v > 1e-4)) return 1.0;
    return std::clamp(v, 1e-4, 1e4);
}

}  // namespace

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::MaxIter: return "max_iter";
    }
    return "unknown";
}

void ConicQp::validate() const {
    const Index n = cost.rows();
    const Index m = constraints.rows();
    if (cost.cols() != n || linear.size() != n || (m > 0 && constraints.cols() != n) || lower.size() != m ||
        upper.size() != m) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "conic QP data sizes are inconsistent");
    }
    if (max_abs(cost - cost.transpose()) > 1e-9 * std::max(1.0, max_abs(cost))) {
        throw Error(ErrorCode::NotPD, kModule, "cost matrix is not symmetric");
    }
    if (n > 0 && min_eigenvalue(cost) < -1e-9 * std::max(1.0, max_abs(cost))) {
        throw Error(ErrorCode::NotPD, kModule, "cost matrix is not positive semidefinite");
    }
    for (Index i = 0; i < m; ++i) {
        if (lower(i) > upper(i)) {
            throw Error(ErrorCode::DimensionMismatch, kModule,
                        "row " + std::to_string(i) + " has lower bound above upper bound");
        }
    }
    for (const auto& e : ellipsoids) {
        if (e.first_row < 0 || e.size <= 0 || e.first_row + e.size > m || e.shape.rows() != e.size ||
            e.shape.cols() != e.size) {
            throw Error(ErrorCode::DimensionMismatch, kModule, "ellipsoid block out of range");
        }
        if (!(e.level > 0.0)) throw Error(ErrorCode::NotPD, kModule, "ellipsoid level must be positive");
        if (min_eigenvalue(e.shape) <= 0.0) throw Error(ErrorCode::NotPD, kModule, "ellipsoid shape is not PD");
    }
}

void SolverSettings::validate() const {
    if (!(rho > 0.0) || !(sigma > 0.0) || !(eps_abs >= 0.0) || !(eps_rel >= 0.0) || max_iterations <= 0 ||
        !(alpha > 0.0 && alpha < 2.0) || check_interval <= 0) {
        throw Error(ErrorCode::InvalidArgument, kModule, "solver settings out of range");
    }
}

// ---------------------------------------------------------------------------
// Ellipsoid projection

EllipsoidProjector::EllipsoidProjector(const Matrix& shape, double level) : shape_(symmetrized(shape)), level_(level) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(shape_);
    values_ = eig.eigenvalues();
    vectors_ = eig.eigenvectors();
    if (values_.size() == 0 || values_.minCoeff() <= 0.0) {
        throw Error(ErrorCode::NotPD, kModule, "ellipsoid shape matrix is not positive definite");
    }
    if (!(level > 0.0)) throw Error(ErrorCode::NotPD, kModule, "ellipsoid level must be positive");
}

Vector EllipsoidProjector::project(const Vector& point) const {
    if (value(point) <= level_) return point;
    const Vector ph = vectors_.transpose() * point;
    const Vector w = values_.cwiseProduct(ph.cwiseAbs2());  // lambda_j * p_j^2
    // f(mu) = sum lambda_j p_j^2 / (1 + mu lambda_j)^2 - level, convex and decreasing on mu >= 0.
    auto f = [&](double mu, double& df) {
        double val = 0.0;
        df = 0.0;
        for (Index j = 0; j < w.size(); ++j) {
            const double den = 1.0 + mu * values_(j);
            val += w(j) / (den * den);
            df -= 2.0 * w(j) * values_(j) / (den * den * den);
        }
        return val - level_;
    };
    double lo = 0.0;
    double hi = (std::sqrt(w.sum() / level_) - 1.0) / values_.minCoeff();
    hi = std::max(hi, 0.0) * (1.0 + 1e-12) + 1e-300;
    double mu = 0.0;
    const double tol = 1e-12 * std::max(1.0, level_);
    for (int it = 0; it < 200; ++it) {
        double df = 0.0;
        const double val = f(mu, df);
        if (std::abs(val) <= tol) break;
        if (val > 0.0) {
            lo = mu;
        } else {
            hi = mu;
        }
        double next = df < 0.0 ? mu - val / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        mu = next;
    }
    Vector xh(ph.size());
    for (Index j = 0; j < ph.size(); ++j) xh(j) = ph(j) / (1.0 + mu * values_(j));
    return vectors_ * xh;
}

double EllipsoidProjector::support(const Vector& direction) const {
    const Vector dh = vectors_.transpose() * direction;
    return std::sqrt(level_ * dh.cwiseAbs2().cwiseQuotient(values_).sum());
}

Vector project_ellipsoid(const Vector& point, const Matrix& shape, double level) {
    return EllipsoidProjector(shape, level).project(point);
}

// ---------------------------------------------------------------------------
// Residuals

Residuals qp_residuals(const ConicQp& qp, const Vector& x, const Vector& y) {
    Residuals r;
    const Vector ax = qp.constraints * x;
    std::vector<char> in_block(static_cast<std::size_t>(qp.num_rows()), 0);
    for (const auto& e : qp.ellipsoids) {
        EllipsoidProjector proj(e.shape, e.level);
        const Vector s = ax.segment(e.first_row, e.size);
        r.primal = std::max(r.primal, inf_norm(s - proj.project(s)));
        for (Index i = 0; i < e.size; ++i) in_block[static_cast<std::size_t>(e.first_row + i)] = 1;
    }
    for (Index i = 0; i < qp.num_rows(); ++i) {
        if (in_block[static_cast<std::size_t>(i)]) continue;
        r.primal = std::max({r.primal, qp.lower(i) - ax(i), ax(i) - qp.upper(i)});
    }
    r.dual = inf_norm(qp.cost * x + qp.linear + qp.constraints.transpose() * y);
    return r;
}

// ---------------------------------------------------------------------------
// Centralized solver

CentralizedSolver::CentralizedSolver(ConicQp qp, SolverSettings settings)
    : qp_(std::move(qp)), settings_(settings) {
    qp_.validate();
    settings_.validate();
    scale_problem();
    rho_ = settings_.rho;
    build_rho();
    factorize();
}

void CentralizedSolver::scale_problem() {
    const Index n = qp_.num_variables();
    const Index m = qp_.num_rows();
    in_ellipsoid_.assign(static_cast<std::size_t>(m), 0);
    for (const auto& e : qp_.ellipsoids) {
        for (Index i = 0; i < e.size; ++i) in_ellipsoid_[static_cast<std::size_t>(e.first_row + i)] = 1;
    }

    p_ = qp_.cost;
    a_ = qp_.constraints;
    d_ = Vector::Ones(n);
    e_ = Vector::Ones(m);
    for (int pass = 0; pass < settings_.scaling_passes; ++pass) {
        Vector dx(n), dz(m);
        for (Index j = 0; j < n; ++j) {
            double norm = p_.col(j).cwiseAbs().maxCoeff();
            if (m > 0) norm = std::max(norm, a_.col(j).cwiseAbs().maxCoeff());
            dx(j) = clip_scaling(1.0 / std::sqrt(norm));
        }
        for (Index i = 0; i < m; ++i) {
            dz(i) = clip_scaling(1.0 / std::sqrt(a_.row(i).cwiseAbs().maxCoeff()));
        }
        // One scale per ellipsoid block so the set stays a plain rescaled ellipsoid.
        for (const auto& e : qp_.ellipsoids) {
            const double g = std::exp(dz.segment(e.first_row, e.size).array().log().mean());
            dz.segment(e.first_row, e.size).setConstant(g);
        }
        p_ = dx.asDiagonal() * p_ * dx.asDiagonal();
        a_ = dz.asDiagonal() * a_ * dx.asDiagonal();
        d_ = d_.cwiseProduct(dx);
        e_ = e_.cwiseProduct(dz);
    }
    double mean_col = 0.0;
    for (Index j = 0; j < n; ++j) mean_col += p_.col(j).cwiseAbs().maxCoeff();
    mean_col = n > 0 ? mean_col / static_cast<double>(n) : 1.0;
    const double q_norm = inf_norm(d_.cwiseProduct(qp_.linear));
    c_ = clip_scaling(1.0 / std::max({mean_col, q_norm, 1e-4}));
    p_ *= c_;
    p_sparse_ = p_.sparseView();
    a_sparse_ = a_.sparseView();
    at_sparse_ = a_sparse_.transpose();
    q_ = c_ * d_.cwiseProduct(qp_.linear);
    l_ = e_.cwiseProduct(qp_.lower);
    u_ = e_.cwiseProduct(qp_.upper);

    projectors_.clear();
    for (const auto& e : qp_.ellipsoids) {
        const double s = e_(e.first_row);
        projectors_.emplace_back(e.shape / (s * s), e.level);
    }
}

void CentralizedSolver::build_rho() {
    const Index m = qp_.num_rows();
    rho_vec_.resize(m);
    for (Index i = 0; i < m; ++i) {
        if (in_ellipsoid_[static_cast<std::size_t>(i)]) {
            rho_vec_(i) = rho_;
        } else if (std::isinf(qp_.lower(i)) && std::isinf(qp_.upper(i))) {
            rho_vec_(i) = kRhoMin;
        } else if (is_equality(qp_.lower(i), qp_.upper(i))) {
            rho_vec_(i) = kRhoEqScale * rho_;
        } else {
            rho_vec_(i) = rho_;
        }
    }
}

void CentralizedSolver::factorize() {
    const Index n = qp_.num_variables();
    Matrix k = p_ + settings_.sigma * Matrix::Identity(n, n);
    if (qp_.num_rows() > 0) k.noalias() += a_.transpose() * rho_vec_.asDiagonal() * a_;
    kkt_.compute(k);
    if (kkt_.info() != Eigen::Success) {
        throw Error(ErrorCode::NumericalBreakdown, kModule,
                    "Cholesky factorization of the reduced KKT matrix failed (min diagonal " +
                        std::to_string(k.diagonal().minCoeff()) + ")");
    }
}

void CentralizedSolver::update_bounds(const Vector& lower, const Vector& upper) {
    if (lower.size() != qp_.num_rows() || upper.size() != qp_.num_rows()) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "bound vector size mismatch");
    }
    qp_.lower = lower;
    qp_.upper = upper;
    l_ = e_.cwiseProduct(lower);
    u_ = e_.cwiseProduct(upper);
    const Vector old = rho_vec_;
    build_rho();
    if (old != rho_vec_) factorize();
}

void CentralizedSolver::update_linear(const Vector& linear) {
    if (linear.size() != qp_.num_variables()) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "linear term size mismatch");
    }
    qp_.linear = linear;
    q_ = c_ * d_.cwiseProduct(linear);
}

void CentralizedSolver::warm_start(const Vector& x, const Vector* y) {
    if (x.size() != qp_.num_variables()) throw Error(ErrorCode::DimensionMismatch, kModule, "warm start size mismatch");
    x_ = x.cwiseQuotient(d_);
    z_ = project(a_ * x_);
    if (y != nullptr && y->size() == qp_.num_rows()) {
        y_ = c_ * y->cwiseQuotient(e_);
    } else if (y_.size() != qp_.num_rows()) {
        y_ = Vector::Zero(qp_.num_rows());
    }
    has_iterate_ = true;
}

void CentralizedSolver::reset() { has_iterate_ = false; }

Vector CentralizedSolver::project(const Vector& v) const {
    Vector out = v.cwiseMax(l_).cwiseMin(u_);
    for (std::size_t b = 0; b < projectors_.size(); ++b) {
        const auto& e = qp_.ellipsoids[b];
        out.segment(e.first_row, e.size) = projectors_[b].project(v.segment(e.first_row, e.size));
    }
    return out;
}

bool CentralizedSolver::infeasibility_certificate(const Vector& delta_y) const {
    const Vector dy = e_.cwiseProduct(delta_y);  // original row units (up to the positive cost scale)
    const double norm = inf_norm(dy);
    if (!(norm > settings_.eps_infeasible)) return false;
    const double eps = settings_.eps_infeasible * norm;
    if (inf_norm(qp_.constraints.transpose() * dy) > eps) return false;
    double support = 0.0;
    for (Index i = 0; i < qp_.num_rows(); ++i) {
        if (in_ellipsoid_[static_cast<std::size_t>(i)]) continue;
        if (dy(i) > eps) {
            if (std::isinf(qp_.upper(i))) return false;
            support += qp_.upper(i) * dy(i);
        } else if (dy(i) < -eps) {
            if (std::isinf(qp_.lower(i))) return false;
            support += qp_.lower(i) * dy(i);
        }
    }
    for (const auto& e : qp_.ellipsoids) {
        const Vector d = dy.segment(e.first_row, e.size);
        support += std::sqrt(e.level * d.dot(e.shape.ldlt().solve(d)));
    }
    return support < -eps;
}

SolveResult CentralizedSolver::solve() {
    const Index n = qp_.num_variables();
    const Index m = qp_.num_rows();
    if (!settings_.warm_start || !has_iterate_) {
        x_ = Vector::Zero(n);
        z_ = Vector::Zero(m);
        y_ = Vector::Zero(m);
    }
    const double alpha = settings_.alpha;
    const Vector d_inv = d_.cwiseInverse();
    const Vector e_inv = e_.cwiseInverse();

    // Guess of the active set: 1 lower, 2 upper, 3 ellipsoid; polishing is tried once it settles.
    auto active_signature = [&]() {
        std::vector<char> sig(static_cast<std::size_t>(m), 0);
        for (Index i = 0; i < m; ++i) {
            if (in_ellipsoid_[static_cast<std::size_t>(i)]) {
                sig[static_cast<std::size_t>(i)] = y_(i) != 0.0 ? 3 : 0;
            } else if (z_(i) - l_(i) < -y_(i)) {
                sig[static_cast<std::size_t>(i)] = 1;
            } else if (u_(i) - z_(i) < y_(i)) {
                sig[static_cast<std::size_t>(i)] = 2;
            }
        }
        return sig;
    };
    std::vector<char> signature, tried;
    int stable = 0;

    SolveResult result;
    result.status = SolveStatus::MaxIter;
    Vector rhs(n), xt(n), zt(m), zhat(m), y_prev(m);
    int it = 0;
    for (it = 1; it <= settings_.max_iterations; ++it) {
        y_prev = y_;
        rhs = settings_.sigma * x_ - q_;
        if (m > 0) rhs.noalias() += at_sparse_ * (rho_vec_.cwiseProduct(z_) - y_);
        xt = kkt_.solve(rhs);
        zt.noalias() = a_sparse_ * xt;
        x_ = alpha * xt + (1.0 - alpha) * x_;
        zhat = alpha * zt + (1.0 - alpha) * z_;
        const Vector z_new = project(zhat + y_.cwiseQuotient(rho_vec_));
        y_ += rho_vec_.cwiseProduct(zhat - z_new);
        z_ = z_new;

        if (it % settings_.check_interval != 0 && it != settings_.max_iterations) continue;

        const Vector ax = a_sparse_ * x_;
        const Vector px = p_sparse_ * x_;
        const Vector aty = at_sparse_ * y_;
        const double prim = m > 0 ? inf_norm(e_inv.cwiseProduct(ax - z_)) : 0.0;
        const double dual = inf_norm(d_inv.cwiseProduct(px + q_ + aty)) / c_;
        const double prim_scale = std::max(inf_norm(e_inv.cwiseProduct(ax)), inf_norm(e_inv.cwiseProduct(z_)));
        const double dual_scale = std::max({inf_norm(d_inv.cwiseProduct(px)), inf_norm(d_inv.cwiseProduct(aty)),
                                            inf_norm(d_inv.cwiseProduct(q_))}) /
                                  c_;
        if (settings_.residual_log != nullptr) {
            *settings_.residual_log << it << ',' << prim << ',' << dual << ',' << rho_ << '\n';
        }
        if (prim <= settings_.eps_abs + settings_.eps_rel * prim_scale &&
            dual <= settings_.eps_abs + settings_.eps_rel * dual_scale) {
            result.status = SolveStatus::Optimal;
            break;
        }
        if (settings_.polish && m > 0) {
            const std::vector<char> sig = active_signature();
            stable = sig == signature ? stable + 1 : 0;
            signature = sig;
        }
        if (settings_.polish && stable >= kStableChecks && signature != tried) {
            tried = signature;
            SolveResult trial;
            trial.x = d_.cwiseProduct(x_);
            trial.y = e_.cwiseProduct(y_) / c_;
            trial.residuals = qp_residuals(qp_, trial.x, trial.y);
            if (polish(trial, true)) {
                x_ = trial.x.cwiseQuotient(d_);
                y_ = c_ * trial.y.cwiseQuotient(e_);
                z_ = project(a_sparse_ * x_);
                has_iterate_ = true;
                trial.status = SolveStatus::Optimal;
                trial.iterations = it;
                trial.objective = qp_.objective(trial.x);
                return trial;
            }
        }
        if (m > 0 && infeasibility_certificate(y_ - y_prev)) {
            result.status = SolveStatus::Infeasible;
            break;
        }
        if (settings_.adaptive_rho && it % settings_.adapt_interval == 0 && m > 0) {
            const double pn = prim / std::max(prim_scale, 1e-12);
            const double dn = dual / std::max(dual_scale, 1e-12);
            double rho_new = std::clamp(rho_ * std::sqrt(pn / std::max(dn, 1e-30)), kRhoMin, kRhoMax);
            if (rho_new > 5.0 * rho_ || rho_new < 0.2 * rho_) {
                rho_ = rho_new;
                build_rho();
                factorize();
            }
        }
    }
    has_iterate_ = true;
    result.iterations = std::min(it, settings_.max_iterations);
    result.x = d_.cwiseProduct(x_);
    result.y = e_.cwiseProduct(y_) / c_;
    if (result.status == SolveStatus::Infeasible) {
        result.residuals = qp_residuals(qp_, result.x, result.y);
        result.objective = qp_.objective(result.x);
        return result;
    }
    result.residuals = qp_residuals(qp_, result.x, result.y);
    if (settings_.polish && result.status == SolveStatus::Optimal) polish(result, false);
    result.objective = qp_.objective(result.x);
    return result;
}

// Refines an ADMM solution by solving the KKT system of its active set; active
// ellipsoid blocks enter as equality-constrained quadratics handled by Newton steps.
bool CentralizedSolver::polish(SolveResult& result, bool early) const {
    const Index n = qp_.num_variables();
    const Index m = qp_.num_rows();
    const Vector& x0 = result.x;
    const Vector& y0 = result.y;
    const Vector ax = qp_.constraints * x0;

    struct ActiveRow {
        Index row;
        double target;
        int side;  // -1 lower, +1 upper, 0 equality
    };
    std::vector<ActiveRow> rows;
    for (Index i = 0; i < m; ++i) {
        if (in_ellipsoid_[static_cast<std::size_t>(i)]) continue;
        const double lo = qp_.lower(i), hi = qp_.upper(i);
        if (is_equality(lo, hi)) {
            rows.push_back({i, hi, 0});
        } else if (std::isfinite(lo) && ax(i) - lo < -y0(i)) {
            rows.push_back({i, lo, -1});
        } else if (std::isfinite(hi) && hi - ax(i) < y0(i)) {
            rows.push_back({i, hi, +1});
        }
    }
    struct ActiveBlock {
        const EllipsoidBlock* block;
        double mu;
    };
    std::vector<ActiveBlock> blocks;
    for (const auto& e : qp_.ellipsoids) {
        const Vector s = ax.segment(e.first_row, e.size);
        const Vector ws = e.shape * s;
        const Vector ye = y0.segment(e.first_row, e.size);
        const double mu = ye.dot(ws) / std::max(ws.squaredNorm(), 1e-300);
        if (s.dot(ws) >= e.level * (1.0 - (early ? 1e-2 : 1e-4)) && mu > 0.0) blocks.push_back({&e, mu});
    }

    const Index ni = static_cast<Index>(rows.size());
    const Index nb = static_cast<Index>(blocks.size());
    const Index dim = n + ni + nb;
    Matrix a_act(ni, n);
    Vector b_act(ni);
    Vector lambda(ni);
    for (Index k = 0; k < ni; ++k) {
        a_act.row(k) = qp_.constraints.row(rows[static_cast<std::size_t>(k)].row);
        b_act(k) = rows[static_cast<std::size_t>(k)].target;
        lambda(k) = y0(rows[static_cast<std::size_t>(k)].row);
    }
    std::vector<Matrix> gwg(static_cast<std::size_t>(nb));
    for (Index b = 0; b < nb; ++b) {
        const auto& e = *blocks[static_cast<std::size_t>(b)].block;
        const Matrix g = qp_.constraints.middleRows(e.first_row, e.size);
        gwg[static_cast<std::size_t>(b)] = g.transpose() * e.shape * g;
    }

    Vector x = x0;
    Vector mu(nb);
    for (Index b = 0; b < nb; ++b) mu(b) = blocks[static_cast<std::size_t>(b)].mu;
    const double scale = std::max({1.0, inf_norm(qp_.linear), max_abs(qp_.cost)});
    constexpr double kReg = 1e-7;
    for (int newton = 0; newton < 30; ++newton) {
        Vector f(dim);
        Matrix hess = qp_.cost;
        Vector grad = qp_.cost * x + qp_.linear + a_act.transpose() * lambda;
        Matrix jac = Matrix::Zero(dim, dim);
        for (Index b = 0; b < nb; ++b) {
            const Matrix& q = gwg[static_cast<std::size_t>(b)];
            const Vector gx = q * x;
            grad += mu(b) * gx;
            hess += mu(b) * q;
            jac.block(0, n + ni + b, n, 1) = gx;
            jac.block(n + ni + b, 0, 1, n) = gx.transpose();
            const auto& e = *blocks[static_cast<std::size_t>(b)].block;
            f(n + ni + b) = 0.5 * (x.dot(gx) - e.level);
        }
        f.head(n) = grad;
        f.segment(n, ni) = a_act * x - b_act;
        jac.topLeftCorner(n, n) = hess;
        jac.block(0, n, n, ni) = a_act.transpose();
        jac.block(n, 0, ni, n) = a_act;
        if (inf_norm(f) <= 1e-13 * scale) break;
        // Quasi-definite regularization, removed again by iterative refinement.
        const Eigen::SparseMatrix<double> sparse_jac = jac.sparseView();
        Vector shift = Vector::Constant(dim, -kReg);
        shift.head(n).setConstant(kReg);
        const Eigen::SparseMatrix<double> reg = sparse_jac + Eigen::SparseMatrix<double>(shift.asDiagonal());
        const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(reg);
        if (ldlt.info() != Eigen::Success) return false;
        Vector step = ldlt.solve(-f);
        for (int r = 0; r < 4; ++r) step += ldlt.solve(-f - sparse_jac * step);
        if (!step.allFinite()) return false;
        x += step.head(n);
        lambda += step.segment(n, ni);
        mu += step.tail(nb);
        if (nb == 0 || inf_norm(step.head(n)) <= 1e-13 * std::max(1.0, inf_norm(x))) break;
    }

    Vector y = Vector::Zero(m);
    for (Index k = 0; k < ni; ++k) {
        const auto& r = rows[static_cast<std::size_t>(k)];
        const double tol = 1e-9 * std::max(1.0, std::abs(lambda(k)));
        if ((r.side < 0 && lambda(k) > tol) || (r.side > 0 && lambda(k) < -tol)) return false;
        y(r.row) = lambda(k);
    }
    for (Index b = 0; b < nb; ++b) {
        if (mu(b) < 0.0) return false;
        const auto& e = *blocks[static_cast<std::size_t>(b)].block;
        y.segment(e.first_row, e.size) = mu(b) * e.shape * (qp_.constraints.middleRows(e.first_row, e.size) * x);
    }
    const Residuals res = qp_residuals(qp_, x, y);
    const double floor = 1e-9 * scale;
    if (early) {
        double bound_scale = 1.0;
        for (Index i = 0; i < m; ++i) {
            if (std::isfinite(qp_.lower(i))) bound_scale = std::max(bound_scale, std::abs(qp_.lower(i)));
            if (std::isfinite(qp_.upper(i))) bound_scale = std::max(bound_scale, std::abs(qp_.upper(i)));
        }
        if (!(res.primal <= 1e-9 * bound_scale && res.dual <= floor)) return false;
    } else if (!(res.primal <= std::max(result.residuals.primal, floor)) ||
               !(res.dual <= std::max(result.residuals.dual, floor))) {
        return false;
    }
    result.x = x;
    result.y = y;
    result.residuals = res;
    result.polished = true;
    return true;
}

SolveResult solve_centralized(const ConicQp& qp, const SolverSettings& settings, const Vector* x_warm,
                              const Vector* y_warm) {
    CentralizedSolver solver(qp, settings);
    if (x_warm != nullptr && settings.warm_start) solver.warm_start(*x_warm, y_warm);
    return solver.solve();
}

}  // namespace dsmpc
