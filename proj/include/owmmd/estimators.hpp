#pragma once

#include "owmmd/common.hpp"
#include "owmmd/embeddings.hpp"
#include "owmmd/kernels.hpp"
#include "owmmd/sampling.hpp"
#include "owmmd/simulators.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <string>

namespace owmmd {

// ---- Blocked kernel sums -----------------------------------------------------

namespace detail {

inline constexpr Eigen::Index kBlock = 512;

/// Apply the radial profile to a block of scaled squared distances in place.
template <typename Scalar>
void apply_profile(const KernelSpec& spec, Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>& r2) {
    if (spec.family == KernelFamily::SquaredExponential) {
        r2 = (Scalar(-0.5) * r2).exp();
        return;
    }
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> r = r2.sqrt();
    if (spec.order == 0.5) {
        r2 = (-r).exp();
    } else if (spec.order == 1.5) {
        const Scalar c = std::sqrt(Scalar(3));
        r2 = (Scalar(1) + c * r) * (-c * r).exp();
    } else {
        const Scalar c = std::sqrt(Scalar(5));
        r2 = (Scalar(1) + c * r + Scalar(5) / Scalar(3) * r2) * (-c * r).exp();
    }
}

/// Kernel block k(A, B) using |a|^2 + |b|^2 - 2 a.b, clamped at zero.
template <typename Scalar, typename DA, typename DB>
Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_block(const KernelSpec& spec,
                                                                  const Eigen::MatrixBase<DA>& A,
                                                                  const Eigen::MatrixBase<DB>& B) {
    const Scalar inv_l2 = Scalar(1) / (Scalar(spec.lengthscale) * Scalar(spec.lengthscale));
    const VectorX<Scalar> a2 = A.rowwise().squaredNorm();
    const VectorX<Scalar> b2 = B.rowwise().squaredNorm();
    MatrixX<Scalar> cross = Scalar(-2) * (A * B.transpose());
    cross.colwise() += a2;
    cross.rowwise() += b2.transpose();
    Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> r2 = cross.array().max(Scalar(0)) * inv_l2;
    apply_profile(spec, r2);
    return Scalar(spec.amplitude) * r2;
}

}  // namespace detail

/// sum_i sum_j k(a_i, b_j).
template <typename DA, typename DB>
typename DA::Scalar kernel_total(const KernelSpec& spec, const Eigen::MatrixBase<DA>& A,
                                 const Eigen::MatrixBase<DB>& B) {
    using Scalar = typename DA::Scalar;
    if (A.cols() != B.cols()) {
        throw ArgumentError("kernel_total: column count mismatch");
    }
    Scalar total(0);
    for (Eigen::Index i = 0; i < A.rows(); i += detail::kBlock) {
        const Eigen::Index bi = std::min(detail::kBlock, A.rows() - i);
        for (Eigen::Index j = 0; j < B.rows(); j += detail::kBlock) {
            const Eigen::Index bj = std::min(detail::kBlock, B.rows() - j);
            total += detail::kernel_block<Scalar>(spec, A.middleRows(i, bi), B.middleRows(j, bj)).sum();
        }
    }
    return total;
}

/// sum_i sum_j k(a_i, a_j) over all ordered pairs, diagonal included.
template <typename DA>
typename DA::Scalar kernel_total(const KernelSpec& spec, const Eigen::MatrixBase<DA>& A) {
    using Scalar = typename DA::Scalar;
    Scalar total(0);
    for (Eigen::Index i = 0; i < A.rows(); i += detail::kBlock) {
        const Eigen::Index bi = std::min(detail::kBlock, A.rows() - i);
        for (Eigen::Index j = i; j < A.rows(); j += detail::kBlock) {
            const Eigen::Index bj = std::min(detail::kBlock, A.rows() - j);
            const Scalar block = detail::kernel_block<Scalar>(spec, A.middleRows(i, bi), A.middleRows(j, bj)).sum();
            total += (i == j) ? block : Scalar(2) * block;
        }
    }
    return total;
}

/// v_j = sum_i k(x_i, y_j), one entry per row of Y.
template <typename DX, typename DY>
VectorX<typename DX::Scalar> kernel_column_sums(const KernelSpec& spec, const Eigen::MatrixBase<DX>& X,
                                                const Eigen::MatrixBase<DY>& Y) {
    using Scalar = typename DX::Scalar;
    if (X.cols() != Y.cols()) {
        throw ArgumentError("kernel_column_sums: column count mismatch");
    }
    VectorX<Scalar> v = VectorX<Scalar>::Zero(Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); i += detail::kBlock) {
        const Eigen::Index bi = std::min(detail::kBlock, X.rows() - i);
        for (Eigen::Index j = 0; j < Y.rows(); j += detail::kBlock) {
            const Eigen::Index bj = std::min(detail::kBlock, Y.rows() - j);
            v.segment(j, bj) +=
                detail::kernel_block<Scalar>(spec, X.middleRows(i, bi), Y.middleRows(j, bj)).colwise().sum().matrix().transpose();
        }
    }
    return v;
}

// ---- Observed data ---------------------------------------------------------

/// Observed sample X with its cached within-sample term (1/n^2) sum k(x_i, x_j),
/// which every estimator shares and which costs O(n^2) to compute.
template <typename Scalar>
struct Observed {
    MatrixX<Scalar> X;
    Scalar self_term = Scalar(0);
    Scalar diagonal = Scalar(0);  // k(x, x) = amplitude

    [[nodiscard]] Eigen::Index size() const noexcept { return X.rows(); }
};

template <typename Derived>
Observed<typename Derived::Scalar> make_observed(const KernelSpec& k, const Eigen::MatrixBase<Derived>& X) {
    using Scalar = typename Derived::Scalar;
    if (X.rows() < 1) {
        throw ArgumentError("observed sample must be non-empty");
    }
    detail::require_finite(X, "observed sample");
    Observed<Scalar> obs;
    obs.X = X;
    const auto n = static_cast<Scalar>(X.rows());
    obs.self_term = kernel_total(k, obs.X) / (n * n);
    obs.diagonal = Scalar(k.amplitude);
    return obs;
}

// ---- Estimators --------------------------------------------------------------

/// V-statistic MMD^2 between the simulated sample Y and the observed sample.
template <typename DY, typename Scalar>
Scalar mmd2_vstat(const KernelSpec& k, const Eigen::MatrixBase<DY>& Y, const Observed<Scalar>& obs) {
    if (Y.rows() < 1) {
        throw ArgumentError("mmd2_vstat: need at least one simulated point");
    }
    if (Y.cols() != obs.X.cols()) {
        throw ArgumentError("mmd2_vstat: dimension mismatch");
    }
    const auto m = static_cast<Scalar>(Y.rows());
    const auto n = static_cast<Scalar>(obs.X.rows());
    return kernel_total(k, Y) / (m * m) - Scalar(2) * kernel_total(k, obs.X, Y) / (m * n) + obs.self_term;
}

template <typename DY, typename DX>
typename DY::Scalar mmd2_vstat(const KernelSpec& k, const Eigen::MatrixBase<DY>& Y, const Eigen::MatrixBase<DX>& X) {
    if (Y.cols() != X.cols()) {
        throw ArgumentError("mmd2_vstat: dimension mismatch");
    }
    return mmd2_vstat(k, Y, make_observed(k, X));
}

/// Unbiased U-statistic: diagonal terms dropped from both within-sample sums.
template <typename DY, typename Scalar>
Scalar mmd2_ustat(const KernelSpec& k, const Eigen::MatrixBase<DY>& Y, const Observed<Scalar>& obs) {
    if (Y.rows() < 2 || obs.X.rows() < 2) {
        throw ArgumentError("mmd2_ustat: both samples need at least two points");
    }
    if (Y.cols() != obs.X.cols()) {
        throw ArgumentError("mmd2_ustat: dimension mismatch");
    }
    const auto m = static_cast<Scalar>(Y.rows());
    const auto n = static_cast<Scalar>(obs.X.rows());
    const Scalar eta = obs.diagonal;
    const Scalar yy = (kernel_total(k, Y) - m * eta) / (m * (m - Scalar(1)));
    const Scalar xx = (obs.self_term * n * n - n * eta) / (n * (n - Scalar(1)));
    return yy - Scalar(2) * kernel_total(k, obs.X, Y) / (m * n) + xx;
}

template <typename DY, typename DX>
typename DY::Scalar mmd2_ustat(const KernelSpec& k, const Eigen::MatrixBase<DY>& Y, const Eigen::MatrixBase<DX>& X) {
    if (Y.cols() != X.cols()) {
        throw ArgumentError("mmd2_ustat: dimension mismatch");
    }
    return mmd2_ustat(k, Y, make_observed(k, X));
}

/// Weighted MMD^2: sum w_i w_j k(y_i, y_j) - (2/n) sum_i sum_j w_j k(x_i, y_j) + self term.
template <typename DY, typename DW, typename Scalar>
Scalar mmd2_weighted(const KernelSpec& k, const Eigen::MatrixBase<DY>& Y, const Eigen::MatrixBase<DW>& w,
                     const Observed<Scalar>& obs) {
    if (Y.rows() != w.size()) {
        throw ArgumentError("mmd2_weighted: one weight per simulated point required");
    }
    if (Y.cols() != obs.X.cols()) {
        throw ArgumentError("mmd2_weighted: dimension mismatch");
    }
    detail::require_finite(w, "mmd2_weighted weights");
    const auto n = static_cast<Scalar>(obs.X.rows());
    const MatrixX<Scalar> K = gram(k, Y);
    const Scalar yy = w.dot(K * w);
    const Scalar xy = w.dot(kernel_column_sums(k, obs.X, Y));
    return yy - Scalar(2) * xy / n + obs.self_term;
}

template <typename DY, typename DW, typename DX>
typename DY::Scalar mmd2_weighted(const KernelSpec& k, const Eigen::MatrixBase<DY>& Y, const Eigen::MatrixBase<DW>& w,
                                  const Eigen::MatrixBase<DX>& X) {
    return mmd2_weighted(k, Y, w, make_observed(k, X));
}

/// MMD from MMD^2: sqrt(max(0, value)).
inline double mmd_from_squared(double mmd2) { return std::sqrt(std::max(0.0, mmd2)); }

// ---- Weighted samples and optimal weights -----------------------------------

/// Simulated outputs paired with weights: P^{m,w} = sum_i w_i delta_{y_i}.
struct WeightedSample {
    Matrix base_points;  // m x s
    Matrix outputs;      // m x d
    Vector weights;      // m

    /// Runs the generator on every base point, so outputs match by construction.
    static WeightedSample from_generator(const SimulatorSpec& sim, const Vector& theta, Matrix base_points,
                                         Vector weights);
    /// Equal weights 1/m.
    static WeightedSample uniform(const SimulatorSpec& sim, const Vector& theta, Matrix base_points);

    [[nodiscard]] Eigen::Index size() const noexcept { return outputs.rows(); }
};

double mmd2_weighted(const KernelSpec& k, const WeightedSample& sample, const Observed<double>& obs);

/// Jitter schedule for the weight system (C + lambda I) w = z: lambda starts at
/// initial_relative * mean(diag C) and grows by `growth` until Cholesky succeeds
/// or it passes max_relative * mean(diag C).
struct JitterPolicy {
    double initial_relative = 1e-8;
    double max_relative = 1e-2;
    double growth = 10.0;
    /// Try an exact solve (lambda = 0) before the schedule starts.
    bool try_exact_first = false;
};

struct OptimalWeights {
    Vector weights;
    Vector embedding;  // z(u_i)
    double jitter = 0.0;
};

/// w* = (c(U, U) + lambda I)^{-1} z(U). Throws NumericalConditioningError,
/// carrying the last jitter tried, when every Cholesky attempt fails.
OptimalWeights optimal_weights(const KernelSpec& c, const Eigen::Ref<const Matrix>& U, const BaseMeasure& base,
                               const JitterPolicy& jitter = {}, const EmbeddingOptions& embedding = {});

/// MMD_c^2(base, sum_i w_i delta_{u_i}) = int int c - 2 w.z + w' C w.
/// An empty U returns the double integral.
double mmd_c_objective(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Matrix>& U,
                       const Eigen::Ref<const Vector>& w, const EmbeddingOptions& embedding = {});

// ---- Pipeline ------------------------------------------------------------------

enum class EstimatorKind { VStat, UStat, OW };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

/// Kernel whose lengthscale may be set by the median heuristic on the point
/// set it is applied to.
struct KernelChoice {
    KernelSpec spec;
    bool median = true;

    [[nodiscard]] KernelSpec resolve(const Eigen::Ref<const Matrix>& points) const;
};

struct EstimateOptions {
    JitterPolicy jitter;
    EmbeddingOptions embedding;
};

/// Result of one estimator evaluation plus the cost counters the CLI reports.
struct EstimateResult {
    double mmd2 = 0.0;
    std::int64_t kernel_evals = 0;
    Eigen::Index solve_dim = 0;
    double jitter = 0.0;
    double c_lengthscale = 0.0;
};

/// MMD^2 between m simulator draws at theta and the observed sample, with the
/// chosen estimator. Base points come from `points` ({IID, RQMC, Grid}) and the
/// seed; OW weights use kernel c on the base points.
EstimateResult estimate_mmd2(EstimatorKind kind, const KernelSpec& k, const KernelChoice& c,
                             const SimulatorSpec& sim, const Vector& theta, Eigen::Index m, PointKind points,
                             std::uint64_t seed, const Observed<double>& obs, const EstimateOptions& options = {});

/// Estimate on given base points (shared by the pipeline and by callers that
/// reuse points across estimators).
EstimateResult estimate_on_points(EstimatorKind kind, const KernelSpec& k, const KernelChoice& c,
                                  const SimulatorSpec& sim, const Vector& theta, const Eigen::Ref<const Matrix>& U,
                                  const Observed<double>& obs, const EstimateOptions& options = {});

/// Optimally-weighted estimate: generate base points, solve for w*, simulate,
/// return the weighted MMD^2 against the observed sample.
double ow_estimate(const KernelSpec& k, const KernelChoice& c, const SimulatorSpec& sim, const Vector& theta,
                   Eigen::Index m, PointKind points, std::uint64_t seed, const Eigen::Ref<const Matrix>& X,
                   const EstimateOptions& options = {});

}  // namespace owmmd
