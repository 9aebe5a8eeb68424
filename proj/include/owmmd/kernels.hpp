#pragma once

#include "owmmd/common.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>

namespace owmmd {

enum class KernelFamily { SquaredExponential, Matern };

/// Radial kernel k(x, y) = amplitude * rho(|x - y| / lengthscale).
///
/// Squared-exponential uses rho(r) = exp(-r^2 / 2) in both the data space and
/// the base space, matching the closed-form embeddings. Matern is limited to
/// the half-integer orders 1/2, 3/2 and 5/2, which have closed forms.
struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    double lengthscale = 1.0;
    double amplitude = 1.0;
    double order = 2.5;  // Matern only

    static KernelSpec squared_exponential(double lengthscale, double amplitude = 1.0) {
        return {KernelFamily::SquaredExponential, lengthscale, amplitude, 2.5};
    }
    static KernelSpec matern(double order, double lengthscale, double amplitude = 1.0) {
        return {KernelFamily::Matern, lengthscale, amplitude, order};
    }

    [[nodiscard]] bool is_se() const noexcept { return family == KernelFamily::SquaredExponential; }

    /// Throws ArgumentError if the spec violates its invariants.
    void validate() const;

    [[nodiscard]] KernelSpec with_lengthscale(double l) const {
        KernelSpec out = *this;
        out.lengthscale = l;
        return out;
    }
};

std::string to_string(KernelFamily family);

namespace detail {

inline bool is_supported_order(double nu) { return nu == 0.5 || nu == 1.5 || nu == 2.5; }

/// rho as a function of the scaled squared distance r^2 = |x - y|^2 / l^2.
template <typename Scalar>
Scalar radial_profile(const KernelSpec& spec, Scalar r2) {
    using std::exp;
    using std::sqrt;
    if (spec.family == KernelFamily::SquaredExponential) {
        return exp(Scalar(-0.5) * r2);
    }
    const Scalar r = sqrt(r2);
    if (spec.order == 0.5) {
        return exp(-r);
    }
    if (spec.order == 1.5) {
        const Scalar a = sqrt(Scalar(3)) * r;
        return (Scalar(1) + a) * exp(-a);
    }
    const Scalar a = sqrt(Scalar(5)) * r;
    return (Scalar(1) + a + Scalar(5) * r2 / Scalar(3)) * exp(-a);
}

/// rho'(r) / r, the factor in the gradient d k(x, y) / dx = amplitude *
/// (rho'(r) / r) * (x - y) / l^2. Finite at r = 0 except Matern 1/2, where the
/// kernel is not differentiable and 0 is returned.
template <typename Scalar>
Scalar radial_slope_over_r(const KernelSpec& spec, Scalar r2) {
    using std::exp;
    using std::sqrt;
    if (spec.family == KernelFamily::SquaredExponential) {
        return -exp(Scalar(-0.5) * r2);
    }
    const Scalar r = sqrt(r2);
    if (spec.order == 0.5) {
        return r > Scalar(0) ? Scalar(-exp(-r) / r) : Scalar(0);
    }
    if (spec.order == 1.5) {
        return Scalar(-3) * exp(-sqrt(Scalar(3)) * r);
    }
    const Scalar a = sqrt(Scalar(5)) * r;
    return Scalar(-5) / Scalar(3) * (Scalar(1) + a) * exp(-a);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) {
        throw ArgumentError(std::string(what) + ": non-finite input");
    }
}

}  // namespace detail

/// k(x, y) for two vectors of equal length.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<DerivedX>& x,
                                      const Eigen::MatrixBase<DerivedY>& y) {
    using Scalar = typename DerivedX::Scalar;
    if (x.size() != y.size() || x.size() < 1) {
        throw ArgumentError("kernel_eval: dimension mismatch");
    }
    detail::require_finite(x, "kernel_eval");
    detail::require_finite(y, "kernel_eval");
    const Scalar l = Scalar(spec.lengthscale);
    const Scalar r2 = (x.derived().reshaped() - y.derived().reshaped()).squaredNorm() / (l * l);
    return Scalar(spec.amplitude) * detail::radial_profile(spec, r2);
}

/// Gram matrix G(i, j) = k(X.row(i), Y.row(j)).
template <typename DerivedX, typename DerivedY>
MatrixX<typename DerivedX::Scalar> gram(const KernelSpec& spec, const Eigen::MatrixBase<DerivedX>& X,
                                        const Eigen::MatrixBase<DerivedY>& Y) {
    using Scalar = typename DerivedX::Scalar;
    if (X.cols() != Y.cols()) {
        throw ArgumentError("gram: column count mismatch");
    }
    detail::require_finite(X, "gram");
    detail::require_finite(Y, "gram");
    const Scalar inv_l2 = Scalar(1) / (Scalar(spec.lengthscale) * Scalar(spec.lengthscale));
    const Scalar eta = Scalar(spec.amplitude);
    MatrixX<Scalar> G(X.rows(), Y.rows());
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
        const auto r2 = (X.rowwise() - Y.row(j)).rowwise().squaredNorm() * inv_l2;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            G(i, j) = eta * detail::radial_profile(spec, Scalar(r2(i)));
        }
    }
    return G;
}

/// Symmetric Gram matrix of one point set; the upper triangle is mirrored so
/// the result is exactly symmetric.
template <typename Derived>
MatrixX<typename Derived::Scalar> gram(const KernelSpec& spec, const Eigen::MatrixBase<Derived>& X) {
    using Scalar = typename Derived::Scalar;
    detail::require_finite(X, "gram");
    const Scalar inv_l2 = Scalar(1) / (Scalar(spec.lengthscale) * Scalar(spec.lengthscale));
    const Scalar eta = Scalar(spec.amplitude);
    const Eigen::Index m = X.rows();
    MatrixX<Scalar> G(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        G(j, j) = eta;
        for (Eigen::Index i = j + 1; i < m; ++i) {
            const Scalar r2 = (X.row(i) - X.row(j)).squaredNorm() * inv_l2;
            G(i, j) = G(j, i) = eta * detail::radial_profile(spec, r2);
        }
    }
    return G;
}

/// Median heuristic: l = sqrt(median{|x_i - x_j|^2 : i < j} / 2).
///
/// Uses every pair when the set has at most `max_points` rows; larger sets use
/// an evenly strided subset of `max_points` rows, so the result stays
/// deterministic. Throws DegenerateDataError when all pairs coincide.
double median_heuristic(const Eigen::Ref<const Matrix>& X, Eigen::Index max_points = 2000);

}  // namespace owmmd
