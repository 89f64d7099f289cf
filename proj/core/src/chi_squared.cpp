#include "dsmpc/chi_squared.hpp"

#include "dsmpc/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace dsmpc {
namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 10000;

// Power series, converges quickly for x < a + 1.
double lower_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < kMaxTerms; ++k) {
        term *= x / (a + k);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for the upper tail Q(a, x), used for x >= a + 1.
double upper_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxTerms; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_lower_gamma(double a, double x) {
    if (!(a > 0.0) || x < 0.0 || std::isnan(x)) {
        throw Error(ErrorCode::InvalidArgument, "uncertainty", "incomplete gamma needs a > 0 and x >= 0");
    }
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return lower_series(a, x);
    return 1.0 - upper_fraction(a, x);
}

double chi_squared_cdf(double dof, double x) { return x <= 0.0 ? 0.0 : regularized_lower_gamma(0.5 * dof, 0.5 * x); }

double chi_squared_pdf(double dof, double x) {
    if (x <= 0.0) return 0.0;
    const double k = 0.5 * dof;
    return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k));
}

double chi_squared_quantile(double dof, double p, double tol) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::InvalidProbability, "uncertainty", "quantile level " + std::to_string(p) + " not in (0,1)");
    }
    if (!(dof > 0.0)) throw Error(ErrorCode::InvalidArgument, "uncertainty", "degrees of freedom must be positive");
    double lo = 0.0;
    double hi = std::max(1.0, dof);
    while (chi_squared_cdf(dof, hi) < p) {
        lo = hi;
        hi *= 2.0;
    }
    // Bisection until the bracket is relatively small.
    while (hi - lo > 1e-3 * hi) {
        const double mid = 0.5 * (lo + hi);
        (chi_squared_cdf(dof, mid) < p ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double f = chi_squared_cdf(dof, x) - p;
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double pdf = chi_squared_pdf(dof, x);
        double next = pdf > 0.0 ? x - f / pdf : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - x);
        x = next;
        const double stop = tol * std::min(1.0, x);
        if (step <= stop || hi - lo <= stop) break;
    }
    return x;
}

}  // namespace dsmpc
