#pragma once

namespace dsmpc {

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
double regularized_lower_gamma(double a, double x);

double chi_squared_cdf(double dof, double x);
double chi_squared_pdf(double dof, double x);

/// Inverse of chi_squared_cdf: bisection to bracket, then safeguarded Newton
/// to an absolute tolerance of `tol`. Throws InvalidProbability unless 0 < p < 1.
double chi_squared_quantile(double dof, double p, double tol = 1e-10);

}  // namespace dsmpc
