#include "dsmpc/lp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace dsmpc {
namespace {

constexpr double kPivotTol = 1e-10;

struct Tableau {
    Matrix t;                // (rows + 1) x (cols + 1); last row holds reduced costs, last column the rhs
    std::vector<Index> basis;
    Index rows = 0;
    Index cols = 0;

    double& rhs(Index i) { return t(i, cols); }

    void pivot(Index r, Index c) {
        t.row(r) /= t(r, c);
        for (Index i = 0; i <= rows; ++i) {
            if (i == r) continue;
            const double f = t(i, c);
            if (f != 0.0) t.row(i) -= f * t.row(r);
        }
        basis[r] = c;
    }

    // Runs primal simplex over columns [0, allowed). Returns Optimal, Unbounded or IterationLimit.
    LpStatus run(Index allowed, int& budget) {
        while (budget-- > 0) {
            Index enter = -1;
            for (Index j = 0; j < allowed; ++j) {
                if (t(rows, j) < -kPivotTol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return LpStatus::Optimal;
            Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Index i = 0; i < rows; ++i) {
                if (t(i, enter) > kPivotTol) {
                    const double ratio = t(i, cols) / t(i, enter);
                    if (ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && leave >= 0 && basis[i] < basis[leave])) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return LpStatus::Unbounded;
            pivot(leave, enter);
        }
        return LpStatus::IterationLimit;
    }

    void set_objective(const Vector& cost) {
        t.row(rows).setZero();
        t.row(rows).head(cost.size()) = cost.transpose();
        for (Index i = 0; i < rows; ++i) {
            const double cb = basis[i] < cost.size() ? cost(basis[i]) : 0.0;
            if (cb != 0.0) t.row(rows) -= cb * t.row(i);
        }
    }
};

}  // namespace

LpResult solve_lp(const Vector& c, const Matrix& a, const Vector& b, int max_iterations) {
    const Index p = a.rows();
    const Index d = a.cols();
    const Index structural = 2 * d + p;  // x+, x-, slacks
    std::vector<Index> artificial_rows;
    for (Index i = 0; i < p; ++i) {
        if (b(i) < 0.0) artificial_rows.push_back(i);
    }
    const Index na = static_cast<Index>(artificial_rows.size());

    Tableau tab;
    tab.rows = p;
    tab.cols = structural + na;
    tab.t = Matrix::Zero(p + 1, tab.cols + 1);
    tab.basis.assign(static_cast<std::size_t>(p), 0);
    Index next_art = 0;
    for (Index i = 0; i < p; ++i) {
        const double sign = b(i) < 0.0 ? -1.0 : 1.0;
        tab.t.block(i, 0, 1, d) = sign * a.row(i);
        tab.t.block(i, d, 1, d) = -sign * a.row(i);
        tab.t(i, 2 * d + i) = sign;
        tab.rhs(i) = sign * b(i);
        if (b(i) < 0.0) {
            tab.t(i, structural + next_art) = 1.0;
            tab.basis[i] = structural + next_art;
            ++next_art;
        } else {
            tab.basis[i] = 2 * d + i;
        }
    }

    int budget = max_iterations;
    LpResult result;
    if (na > 0) {
        Vector phase1 = Vector::Zero(tab.cols);
        phase1.tail(na).setOnes();
        tab.set_objective(phase1);
        const LpStatus s = tab.run(tab.cols, budget);
        if (s == LpStatus::IterationLimit) return result;
        const double infeasibility = -tab.t(p, tab.cols);
        const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
        if (infeasibility > 1e-9 * scale) {
            result.status = LpStatus::Infeasible;
            return result;
        }
        // Drive any zero-level artificial out of the basis.
        for (Index i = 0; i < p; ++i) {
            if (tab.basis[i] < structural) continue;
            for (Index j = 0; j < structural; ++j) {
                if (std::abs(tab.t(i, j)) > kPivotTol) {
                    tab.pivot(i, j);
                    break;
                }
            }
        }
    }

    Vector cost = Vector::Zero(tab.cols);
    cost.head(d) = c;
    cost.segment(d, d) = -c;
    tab.set_objective(cost);
    const LpStatus s = tab.run(structural, budget);
    result.status = s;
    if (s != LpStatus::Optimal) return result;

    Vector y = Vector::Zero(tab.cols);
    for (Index i = 0; i < p; ++i) y(tab.basis[i]) = tab.rhs(i);
    result.x = y.head(d) - y.segment(d, d);
    result.objective = c.dot(result.x);
    return result;
}

bool is_feasible(const Matrix& a, const Vector& b) {
    return solve_lp(Vector::Zero(a.cols()), a, b).status == LpStatus::Optimal;
}

}  // namespace dsmpc
