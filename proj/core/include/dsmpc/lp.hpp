#pragma once

#include "dsmpc/linalg.hpp"

namespace dsmpc {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpResult {
    LpStatus status = LpStatus::IterationLimit;
    Vector x;
    double objective = 0.0;
};

/// Minimizes c^T x subject to A x <= b with x free, by a dense two-phase simplex
/// with Bland's rule. Intended for the small polytopes used in set checks.
LpResult solve_lp(const Vector& c, const Matrix& a, const Vector& b, int max_iterations = 50000);

/// True if {x : A x <= b} has a point (phase-1 only).
bool is_feasible(const Matrix& a, const Vector& b);

}  // namespace dsmpc
