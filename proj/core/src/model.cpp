#include "dsmpc/model.hpp"

#include "dsmpc/error.hpp"
#include "dsmpc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dsmpc {
namespace {

constexpr const char* kModule = "model";
constexpr double kUnboundedSupport = 1e9;

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void expect_shape(const Matrix& m, Index rows, Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw Error(ErrorCode::DimensionMismatch, kModule,
                    what + " is " + dims(m) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

bool is_symmetric(const Matrix& m) { return max_abs(m - m.transpose()) <= 1e-12 * std::max(1.0, max_abs(m)); }

void validate_subsystem(const std::vector<SubsystemSpec>& subs, std::size_t i) {
    const SubsystemSpec& s = subs[i];
    const std::string tag = "subsystem " + std::to_string(i);
    if (s.state_dim <= 0 || s.input_dim <= 0 || s.output_dim < 0) {
        throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": dimensions must be positive");
    }
    if (s.a_blocks.size() != s.neighbors.size() || s.c_blocks.size() != s.neighbors.size()) {
        throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": coupling blocks do not match the neighbour list");
    }
    Index n_nb = 0;
    for (std::size_t k = 0; k < s.neighbors.size(); ++k) {
        const Index j = s.neighbors[k];
        if (j < 0 || static_cast<std::size_t>(j) >= subs.size()) {
            throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": neighbour index out of range");
        }
        const Index nj = subs[static_cast<std::size_t>(j)].state_dim;
        expect_shape(s.a_blocks[k], s.state_dim, nj, tag + " A block for neighbour " + std::to_string(j));
        expect_shape(s.c_blocks[k], s.output_dim, nj, tag + " C block for neighbour " + std::to_string(j));
        n_nb += nj;
    }
    expect_shape(s.b, s.state_dim, s.input_dim, tag + " B");
    expect_shape(s.noise_cov, s.state_dim, s.state_dim, tag + " noise covariance");
    expect_shape(s.q, s.state_dim, s.state_dim, tag + " Q");
    expect_shape(s.r, s.input_dim, s.input_dim, tag + " R");
    expect_shape(s.t, s.output_dim, s.output_dim, tag + " T");
    if (s.state_set.dim() != n_nb) {
        throw Error(ErrorCode::DimensionMismatch, kModule,
                    tag + ": state polytope has " + std::to_string(s.state_set.dim()) +
                        " columns, neighbourhood state has " + std::to_string(n_nb));
    }
    s.state_set.validate(kModule, tag + " state polytope");
    if (s.input_set.dim() != s.input_dim) {
        throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": input polytope column count");
    }
    s.input_set.validate(kModule, tag + " input polytope");
    if (s.state_nominal.size() != static_cast<std::size_t>(s.state_set.rows()) ||
        s.input_nominal.size() != static_cast<std::size_t>(s.input_set.rows())) {
        throw Error(ErrorCode::DimensionMismatch, kModule, tag + ": nominal-row flags do not match polytope rows");
    }
    if (s.gain) expect_shape(*s.gain, s.input_dim, n_nb, tag + " gain K_N");

    if (!is_symmetric(s.noise_cov) || min_eigenvalue(s.noise_cov) <= 0.0) {
        throw Error(ErrorCode::NoiseNotPD, kModule, tag + ": noise covariance is not symmetric positive definite");
    }
    if (!(s.p_x > 0.0 && s.p_x < 1.0) || !(s.p_u > 0.0 && s.p_u < 1.0)) {
        throw Error(ErrorCode::InvalidProbability, kModule, tag + ": probability levels must lie in (0,1)");
    }
    if (!is_symmetric(s.q) || min_eigenvalue(s.q) < -1e-12 * std::max(1.0, max_abs(s.q))) {
        throw Error(ErrorCode::NotPD, kModule, tag + ": Q must be symmetric positive semidefinite");
    }
    if (!is_symmetric(s.r) || min_eigenvalue(s.r) <= 0.0) {
        throw Error(ErrorCode::NotPD, kModule, tag + ": R must be symmetric positive definite");
    }
    if (s.output_dim > 0 && (!is_symmetric(s.t) || min_eigenvalue(s.t) <= 0.0)) {
        throw Error(ErrorCode::NotPD, kModule, tag + ": T must be symmetric positive definite");
    }
}

}  // namespace

void Polytope::validate(std::string_view module, std::string_view what) const {
    if (H.rows() != h.size()) {
        throw Error(ErrorCode::DimensionMismatch, module,
                    std::string(what) + ": H has " + std::to_string(H.rows()) + " rows but h has " +
                        std::to_string(h.size()));
    }
    for (Index i = 0; i < H.rows(); ++i) {
        if (H.row(i).cwiseAbs().maxCoeff() == 0.0) {
            throw Error(ErrorCode::DimensionMismatch, module,
                        std::string(what) + ": row " + std::to_string(i) + " is zero");
        }
    }
    if (!h.allFinite() || !H.allFinite()) {
        throw Error(ErrorCode::DimensionMismatch, module, std::string(what) + ": non-finite entries");
    }
}

bool Polytope::contains(const Vector& x, double tol) const {
    return H.rows() == 0 || ((H * x - h).maxCoeff() <= tol);
}

std::string_view to_string(Distribution d) { return d == Distribution::Gaussian ? "gaussian" : "uniform"; }

Distribution parse_distribution(std::string_view text) {
    if (text == "gaussian") return Distribution::Gaussian;
    if (text == "uniform") return Distribution::Uniform;
    throw Error(ErrorCode::ParseError, kModule, "unknown distribution '" + std::string(text) + "'");
}

Matrix NetworkModel::local_closed_loop(Index i) const {
    const auto ui = static_cast<std::size_t>(i);
    const Index rows = subsystems[ui].state_dim;
    return closed_loop().middleRows(state_offset[ui], rows) * selectors[ui].transpose();
}

Index NetworkModel::state_owner(Index j) const {
    for (std::size_t i = subsystems.size(); i-- > 0;) {
        if (j >= state_offset[i]) return static_cast<Index>(i);
    }
    return 0;
}

double spectral_radius(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorCode::NonSquare, kModule, "spectral radius of a " + dims(m) + " matrix");
    }
    return spectral_radius_of(m);
}

LqrResult lqr_gain(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, int max_iterations) {
    const Index n = a.rows();
    if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != b.cols() ||
        r.cols() != b.cols()) {
        throw Error(ErrorCode::DimensionMismatch, kModule, "LQR data sizes are inconsistent");
    }
    LqrResult out;
    Matrix p = q;
    for (int it = 1; it <= max_iterations; ++it) {
        const Matrix bp = b.transpose() * p;
        const Matrix k = -(r + bp * b).ldlt().solve(bp * a);
        Matrix next = symmetrized(q + a.transpose() * p * a + a.transpose() * p * b * k);
        const double step = max_abs(next - p);
        p = std::move(next);
        if (!p.allFinite()) break;
        if (step < 1e-12 * std::max(1.0, max_abs(p))) {
            const Matrix bpf = b.transpose() * p;
            out.K = -(r + bpf * b).ldlt().solve(bpf * a);
            out.P = p;
            out.iterations = it;
            if (spectral_radius(a + b * out.K) >= 1.0 - kStabilityMargin) break;
            return out;
        }
    }
    throw Error(ErrorCode::RiccatiDivergence, kModule,
                "Riccati iteration did not converge to a stabilizing solution in " + std::to_string(max_iterations) +
                    " iterations");
}

void check_bounded(const Polytope& set, std::string_view what) {
    if (set.rows() > 0 && !is_feasible(set.H, set.h)) {
        throw Error(ErrorCode::EmptyConstraintSet, kModule, std::string(what) + " set is empty");
    }
    for (Index j = 0; j < set.dim(); ++j) {
        for (double sign : {1.0, -1.0}) {
            Vector c = Vector::Zero(set.dim());
            c(j) = -sign;
            const LpResult lp = solve_lp(c, set.H, set.h);
            const bool unbounded = set.rows() == 0 || lp.status == LpStatus::Unbounded ||
                                   (lp.status == LpStatus::Optimal && -lp.objective > kUnboundedSupport);
            if (unbounded) {
                throw Error(ErrorCode::UnboundedConstraintSet, kModule,
                            std::string(what) + " set is unbounded along " + (sign > 0 ? "+" : "-") + "coordinate " +
                                std::to_string(j) + "; add large finite bounds");
            }
        }
    }
}

NetworkModel assemble_network(std::vector<SubsystemSpec> subsystems, int horizon, Distribution distribution) {
    if (subsystems.empty()) throw Error(ErrorCode::DimensionMismatch, kModule, "network has no subsystems");
    if (horizon < 1) throw Error(ErrorCode::DimensionMismatch, kModule, "horizon must be at least 1");
    const std::size_t count = subsystems.size();
    for (std::size_t i = 0; i < count; ++i) {
        auto& nb = subsystems[i].neighbors;
        if (!std::is_sorted(nb.begin(), nb.end()) || std::adjacent_find(nb.begin(), nb.end()) != nb.end()) {
            throw Error(ErrorCode::DimensionMismatch, kModule,
                        "subsystem " + std::to_string(i) + ": neighbour list must be sorted and unique");
        }
        if (!std::binary_search(nb.begin(), nb.end(), static_cast<Index>(i))) {
            throw Error(ErrorCode::DimensionMismatch, kModule,
                        "subsystem " + std::to_string(i) + ": neighbourhood must contain the subsystem itself");
        }
    }
    for (std::size_t i = 0; i < count; ++i) validate_subsystem(subsystems, i);
    for (std::size_t i = 0; i < count; ++i) {
        for (Index j : subsystems[i].neighbors) {
            const auto& back = subsystems[static_cast<std::size_t>(j)].neighbors;
            if (!std::binary_search(back.begin(), back.end(), static_cast<Index>(i))) {
                throw Error(ErrorCode::GraphNotBidirectional, kModule,
                            std::to_string(j) + " is a neighbour of " + std::to_string(i) + " but not vice versa");
            }
        }
    }

    NetworkModel net;
    net.subsystems = std::move(subsystems);
    net.horizon = horizon;
    net.distribution = distribution;
    for (const auto& s : net.subsystems) {
        net.state_offset.push_back(net.n);
        net.input_offset.push_back(net.m);
        net.output_offset.push_back(net.l);
        net.n += s.state_dim;
        net.m += s.input_dim;
        net.l += s.output_dim;
    }
    net.A = Matrix::Zero(net.n, net.n);
    net.B = Matrix::Zero(net.n, net.m);
    net.C = Matrix::Zero(net.l, net.n);
    net.K = Matrix::Zero(net.m, net.n);
    net.noise_cov = Matrix::Zero(net.n, net.n);
    net.Q = Matrix::Zero(net.n, net.n);
    net.R = Matrix::Zero(net.m, net.m);
    net.T = Matrix::Zero(net.l, net.l);

    Index state_rows = 0, input_rows = 0;
    for (const auto& s : net.subsystems) {
        state_rows += s.state_set.rows();
        input_rows += s.input_set.rows();
    }
    net.state_set.H = Matrix::Zero(state_rows, net.n);
    net.state_set.h.resize(state_rows);
    net.input_set.H = Matrix::Zero(input_rows, net.m);
    net.input_set.h.resize(input_rows);

    bool all_gains = true;
    Index sr = 0, ir = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& s = net.subsystems[i];
        const Index xo = net.state_offset[i], uo = net.input_offset[i], yo = net.output_offset[i];
        Index n_nb = 0;
        for (Index j : s.neighbors) n_nb += net.subsystems[static_cast<std::size_t>(j)].state_dim;
        Matrix sel = Matrix::Zero(n_nb, net.n);
        Index col = 0;
        for (std::size_t k = 0; k < s.neighbors.size(); ++k) {
            const auto j = static_cast<std::size_t>(s.neighbors[k]);
            const Index nj = net.subsystems[j].state_dim;
            sel.block(col, net.state_offset[j], nj, nj).setIdentity();
            net.A.block(xo, net.state_offset[j], s.state_dim, nj) = s.a_blocks[k];
            net.C.block(yo, net.state_offset[j], s.output_dim, nj) = s.c_blocks[k];
            col += nj;
        }
        net.selectors.push_back(sel);
        net.B.block(xo, uo, s.state_dim, s.input_dim) = s.b;
        net.noise_cov.block(xo, xo, s.state_dim, s.state_dim) = s.noise_cov;
        net.Q.block(xo, xo, s.state_dim, s.state_dim) = s.q;
        net.R.block(uo, uo, s.input_dim, s.input_dim) = s.r;
        net.T.block(yo, yo, s.output_dim, s.output_dim) = s.t;
        if (s.gain) {
            net.K.middleRows(uo, s.input_dim) = *s.gain * sel;
        } else {
            all_gains = false;
        }
        const Index rs = s.state_set.rows();
        net.state_set.H.middleRows(sr, rs) = s.state_set.H * sel;
        net.state_set.h.segment(sr, rs) = s.state_set.h;
        for (Index k = 0; k < rs; ++k) {
            net.state_row_owner.push_back(static_cast<Index>(i));
            net.state_row_nominal.push_back(s.state_nominal[static_cast<std::size_t>(k)]);
        }
        sr += rs;
        const Index ri = s.input_set.rows();
        net.input_set.H.block(ir, uo, ri, s.input_dim) = s.input_set.H;
        net.input_set.h.segment(ir, ri) = s.input_set.h;
        for (Index k = 0; k < ri; ++k) {
            net.input_row_owner.push_back(static_cast<Index>(i));
            net.input_row_nominal.push_back(s.input_nominal[static_cast<std::size_t>(k)]);
        }
        ir += ri;
    }

    if (!all_gains) {
        const bool any_gain = std::any_of(net.subsystems.begin(), net.subsystems.end(),
                                          [](const SubsystemSpec& s) { return s.gain.has_value(); });
        if (any_gain) {
            throw Error(ErrorCode::GainRequired, kModule, "gain blocks must be given for all subsystems or none");
        }
        const LqrResult lqr = lqr_gain(net.A, net.B, net.Q, net.R);
        // The dense gain is only usable when it respects every neighbourhood.
        const double scale = std::max(1.0, max_abs(lqr.K));
        for (std::size_t i = 0; i < count; ++i) {
            auto& s = net.subsystems[i];
            const Matrix rows = lqr.K.middleRows(net.input_offset[i], s.input_dim);
            const Matrix local = rows * net.selectors[i].transpose();
            if (max_abs(rows - local * net.selectors[i]) > 1e-12 * scale) {
                throw Error(ErrorCode::GainRequired, kModule,
                            "LQR gain couples subsystem " + std::to_string(i) +
                                " to non-neighbours; provide a structured gain");
            }
        }
        net.K = lqr.K;
        net.gain_from_lqr = true;
    }

    const double rho = spectral_radius(net.closed_loop());
    if (!(rho < 1.0 - kStabilityMargin)) {
        throw Error(ErrorCode::UnstableClosedLoop, kModule,
                    "spectral radius of A+BK is " + std::to_string(rho));
    }
    check_bounded(net.state_set, "state");
    check_bounded(net.input_set, "input");
    return net;
}

}  // namespace dsmpc
