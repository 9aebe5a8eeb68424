#pragma once

namespace owmmd {

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal CDF, computed through erfc so the lower tail keeps full
/// relative accuracy.
double norm_cdf(double x);

/// Inverse of the standard normal CDF. Acklam's rational approximation
/// followed by one Halley refinement step against norm_cdf.
/// Throws ArgumentError unless 0 < p < 1.
double inv_norm_cdf(double p);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Inverse of x -> P(a, x) for shape a and unit rate, i.e. the Gamma(a, 1)
/// quantile function. Safeguarded Newton iteration inside a bisection
/// bracket; tolerance 1e-10 relative. Throws ArgumentError unless 0 < p < 1.
double gamma_p_inv(double a, double p);

}  // namespace owmmd
