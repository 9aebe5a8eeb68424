#include "owmmd/special_functions.hpp"

#include "owmmd/common.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace owmmd {

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace {

// Acklam's rational approximation, lower half only (p <= 0.5).
double acklam_lower(double p) {
    constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                            1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                            6.680131188771972e+01,  -1.328068155288572e+01};
    constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                            -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                            3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double inv_norm_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ArgumentError("inv_norm_cdf: probability must lie in (0, 1)");
    }
    if (p == 0.5) {
        return 0.0;
    }
    // Work in the lower tail, where norm_cdf has full relative accuracy.
    const bool upper = p > 0.5;
    const double q = upper ? 1.0 - p : p;
    double x = acklam_lower(q);
    // Halley step.
    const double e = norm_cdf(x) - q;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return upper ? -x : x;
}

namespace {

double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-17) {
            break;
        }
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail Q(a, x) by modified Lentz continued fraction.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) {
            break;
        }
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a)) {
        throw ArgumentError("gamma_p: requires a > 0 and x >= 0");
    }
    if (x == 0.0) {
        return 0.0;
    }
    if (std::isinf(x)) {
        return 1.0;
    }
    if (x < a + 1.0) {
        return gamma_p_series(a, x);
    }
    return 1.0 - gamma_q_fraction(a, x);
}

double gamma_p_inv(double a, double p) {
    if (!(a > 0.0) || !std::isfinite(a)) {
        throw ArgumentError("gamma_p_inv: shape must be positive and finite");
    }
    if (!(p > 0.0 && p < 1.0)) {
        throw ArgumentError("gamma_p_inv: probability must lie in (0, 1)");
    }
    const double log_gamma_a = std::lgamma(a);

    // Bracket [lo, hi] with P(a, lo) <= p <= P(a, hi).
    double lo = 0.0;
    double hi = std::max(1.0, a);
    while (gamma_p(a, hi) < p) {
        lo = hi;
        hi *= 2.0;
    }

    // Small-x asymptote P(a, x) ~ x^a / Gamma(a + 1) gives a good start in the
    // lower tail; otherwise start from the bracket midpoint.
    double x = std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
    if (!(x > lo && x < hi)) {
        x = 0.5 * (lo + hi);
    }

    for (int iter = 0; iter < 300; ++iter) {
        const double f = gamma_p(a, x) - p;
        if (f == 0.0) {
            return x;
        }
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double density = std::exp((a - 1.0) * std::log(x) - x - log_gamma_a);
        double next = x - f / density;
        if (!(next > lo && next < hi) || !std::isfinite(next)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - x) <= 1e-14 * std::max(x, std::numeric_limits<double>::min())) {
            return next;
        }
        x = next;
        if (hi - lo <= 1e-14 * hi) {
            return 0.5 * (lo + hi);
        }
    }
    return x;
}

}  // namespace owmmd
