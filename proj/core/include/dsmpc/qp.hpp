#pragma once

#include "dsmpc/linalg.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <limits>
#include <vector>

namespace dsmpc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A contiguous group of constraint rows whose values must lie in
/// {s : s^T shape s <= level}. Interval bounds of those rows are ignored.
struct EllipsoidBlock {
    Index first_row = 0;
    Index size = 0;
    Matrix shape;
    double level = 1.0;
};

/// min 1/2 x^T cost x + linear^T x  s.t.  lower <= constraints x <= upper, ellipsoid blocks.
/// Equalities are rows with lower == upper.
struct ConicQp {
    Matrix cost;
    Vector linear;
    Matrix constraints;
    Vector lower;
    Vector upper;
    std::vector<EllipsoidBlock> ellipsoids;

    Index num_variables() const { return cost.rows(); }
    Index num_rows() const { return constraints.rows(); }

    /// Throws DimensionMismatch / NotPD on malformed data.
    void validate() const;
    double objective(const Vector& x) const { return 0.5 * x.dot(cost * x) + linear.dot(x); }
};

struct SolverSettings {
    double rho = 1.0;
    double sigma = 1e-6;
    double alpha = 1.6;
    double eps_abs = 1e-6;
    double eps_rel = 1e-6;
    double eps_infeasible = 1e-7;
    int max_iterations = 20000;
    int scaling_passes = 10;
    int check_interval = 5;
    int adapt_interval = 50;
    bool adaptive_rho = true;
    bool warm_start = true;
    bool polish = true;
    /// When set, one CSV line per residual check: iteration,primal,dual,rho.
    std::ostream* residual_log = nullptr;

    void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, MaxIter };

const char* to_string(SolveStatus s);

struct Residuals {
    double primal = 0.0;  // max distance of each row value to its set
    double dual = 0.0;    // ||P x + q + A^T y||_inf
};

/// Residuals of (x, y) measured on the unscaled problem.
Residuals qp_residuals(const ConicQp& qp, const Vector& x, const Vector& y);

struct SolveResult {
    Vector x;
    Vector y;
    SolveStatus status = SolveStatus::MaxIter;
    int iterations = 0;
    Residuals residuals;
    double objective = 0.0;
    bool polished = false;
};

/// Euclidean projection onto {x : x^T shape x <= level}; shape symmetric PD.
Vector project_ellipsoid(const Vector& point, const Matrix& shape, double level);

/// Projection onto a fixed ellipsoid with the eigendecomposition cached.
class EllipsoidProjector {
public:
    EllipsoidProjector() = default;
    EllipsoidProjector(const Matrix& shape, double level);

    Vector project(const Vector& point) const;
    double value(const Vector& point) const { return point.dot(shape_ * point); }
    double level() const { return level_; }
    const Matrix& shape() const { return shape_; }
    /// sup over the set of d^T s.
    double support(const Vector& direction) const;

private:
    Matrix shape_;
    Matrix vectors_;
    Vector values_;
    double level_ = 1.0;
};

/// Operator-splitting solver with the KKT factorization kept across solves.
/// Only bounds and the linear cost term may change between solves.
class CentralizedSolver {
public:
    CentralizedSolver(ConicQp qp, SolverSettings settings);

    void update_bounds(const Vector& lower, const Vector& upper);
    void update_linear(const Vector& linear);
    /// Seeds the next solve with a primal (and optionally dual) point in original units.
    void warm_start(const Vector& x, const Vector* y = nullptr);
    void reset();

    SolveResult solve();

    const ConicQp& problem() const { return qp_; }
    const SolverSettings& settings() const { return settings_; }

private:
    void scale_problem();
    void build_rho();
    void factorize();
    Vector project(const Vector& v) const;
    bool infeasibility_certificate(const Vector& delta_y) const;
    /// Early attempts demand a KKT-accurate result; the final one only needs to beat ADMM.
    bool polish(SolveResult& result, bool early) const;

    ConicQp qp_;
    SolverSettings settings_;

    // scaled data
    Vector d_;  // variable scaling
    Vector e_;  // row scaling
    double c_ = 1.0;
    Matrix p_;
    Matrix a_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> p_sparse_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> a_sparse_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> at_sparse_;
    Vector q_;
    Vector l_;
    Vector u_;
    std::vector<EllipsoidProjector> projectors_;
    std::vector<char> in_ellipsoid_;

    double rho_ = 1.0;
    Vector rho_vec_;
    Eigen::LLT<Matrix> kkt_;

    Vector x_;
    Vector z_;
    Vector y_;
    bool has_iterate_ = false;
};

SolveResult solve_centralized(const ConicQp& qp, const SolverSettings& settings,
                              const Vector* x_warm = nullptr, const Vector* y_warm = nullptr);

}  // namespace dsmpc
