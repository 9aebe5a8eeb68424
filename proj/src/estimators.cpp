#include "owmmd/estimators.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace owmmd {

WeightedSample WeightedSample::from_generator(const SimulatorSpec& sim, const Vector& theta, Matrix base_points,
                                              Vector weights) {
    if (weights.size() != base_points.rows()) {
        throw ArgumentError("WeightedSample: one weight per base point required");
    }
    if (!weights.allFinite()) {
        throw ArgumentError("WeightedSample: weights must be finite");
    }
    WeightedSample out;
    out.outputs = sim.simulate(theta, base_points);
    out.base_points = std::move(base_points);
    out.weights = std::move(weights);
    return out;
}

WeightedSample WeightedSample::uniform(const SimulatorSpec& sim, const Vector& theta, Matrix base_points) {
    const Eigen::Index m = base_points.rows();
    if (m < 1) {
        throw ArgumentError("WeightedSample: need at least one base point");
    }
    return from_generator(sim, theta, std::move(base_points), Vector::Constant(m, 1.0 / static_cast<double>(m)));
}

double mmd2_weighted(const KernelSpec& k, const WeightedSample& sample, const Observed<double>& obs) {
    return mmd2_weighted(k, sample.outputs, sample.weights, obs);
}

OptimalWeights optimal_weights(const KernelSpec& c, const Eigen::Ref<const Matrix>& U, const BaseMeasure& base,
                               const JitterPolicy& jitter, const EmbeddingOptions& embedding) {
    c.validate();
    if (U.rows() < 1) {
        throw ArgumentError("optimal_weights: need at least one base point");
    }
    OptimalWeights out;
    out.embedding = embed_points(c, base, U, embedding);
    Matrix C = gram(c, U);
    const double scale = C.diagonal().mean();
    const Eigen::Index m = U.rows();

    double lambda = jitter.try_exact_first ? 0.0 : jitter.initial_relative * scale;
    const double max_lambda = jitter.max_relative * scale;
    while (true) {
        Matrix A = C;
        A.diagonal().array() += lambda;
        Eigen::LLT<Matrix> llt(A);
        if (llt.info() == Eigen::Success) {
            out.weights = llt.solve(out.embedding);
            if (out.weights.allFinite()) {
                out.jitter = lambda;
                return out;
            }
        }
        if (lambda == 0.0) {
            lambda = jitter.initial_relative * scale;
            continue;
        }
        const double next = lambda * jitter.growth;
        if (next > max_lambda * (1.0 + 1e-12)) {
            throw NumericalConditioningError(
                "optimal_weights: Cholesky failed for m = " + std::to_string(m) + " up to jitter " +
                    std::to_string(lambda),
                lambda);
        }
        lambda = next;
    }
}

double mmd_c_objective(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Matrix>& U,
                       const Eigen::Ref<const Vector>& w, const EmbeddingOptions& embedding) {
    if (U.rows() != w.size()) {
        throw ArgumentError("mmd_c_objective: one weight per point required");
    }
    const double integral = double_embed_auto(c, base, embedding);
    if (U.rows() == 0) {
        return integral;
    }
    const Vector z = embed_points(c, base, U, embedding);
    const Matrix C = gram(c, U);
    return integral - 2.0 * w.dot(z) + w.dot(C * w);
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::VStat: return "vstat";
        case EstimatorKind::UStat: return "ustat";
        case EstimatorKind::OW: return "ow";
    }
    return "unknown";
}

EstimatorKind estimator_from_string(const std::string& name) {
    if (name == "vstat") return EstimatorKind::VStat;
    if (name == "ustat") return EstimatorKind::UStat;
    if (name == "ow") return EstimatorKind::OW;
    throw ArgumentError("unknown estimator '" + name + "' (expected vstat, ustat or ow)");
}

KernelSpec KernelChoice::resolve(const Eigen::Ref<const Matrix>& points) const {
    if (!median) {
        spec.validate();
        return spec;
    }
    KernelSpec out = spec.with_lengthscale(median_heuristic(points));
    out.validate();
    return out;
}

EstimateResult estimate_on_points(EstimatorKind kind, const KernelSpec& k, const KernelChoice& c,
                                  const SimulatorSpec& sim, const Vector& theta, const Eigen::Ref<const Matrix>& U,
                                  const Observed<double>& obs, const EstimateOptions& options) {
    k.validate();
    const Eigen::Index m = U.rows();
    const auto n = static_cast<std::int64_t>(obs.size());
    const Matrix Y = sim.simulate(theta, U);

    EstimateResult result;
    // Kernel evaluations on the data side: within-simulated and cross terms;
    // the observed self term is cached and not counted per estimate.
    result.kernel_evals = static_cast<std::int64_t>(m) * m + static_cast<std::int64_t>(m) * n;
    switch (kind) {
        case EstimatorKind::VStat:
            result.mmd2 = mmd2_vstat(k, Y, obs);
            break;
        case EstimatorKind::UStat:
            result.mmd2 = mmd2_ustat(k, Y, obs);
            break;
        case EstimatorKind::OW: {
            const KernelSpec c_resolved = m >= 2 ? c.resolve(U) : c.spec;
            const OptimalWeights w = optimal_weights(c_resolved, U, sim.base, options.jitter, options.embedding);
            result.mmd2 = mmd2_weighted(k, Y, w.weights, obs);
            result.jitter = w.jitter;
            result.solve_dim = m;
            result.c_lengthscale = c_resolved.lengthscale;
            result.kernel_evals += static_cast<std::int64_t>(m) * m;
            break;
        }
    }
    return result;
}

EstimateResult estimate_mmd2(EstimatorKind kind, const KernelSpec& k, const KernelChoice& c,
                             const SimulatorSpec& sim, const Vector& theta, Eigen::Index m, PointKind points,
                             std::uint64_t seed, const Observed<double>& obs, const EstimateOptions& options) {
    const PointSet U = generate_points(sim.base, points, m, seed);
    return estimate_on_points(kind, k, c, sim, theta, U.points, obs, options);
}

double ow_estimate(const KernelSpec& k, const KernelChoice& c, const SimulatorSpec& sim, const Vector& theta,
                   Eigen::Index m, PointKind points, std::uint64_t seed, const Eigen::Ref<const Matrix>& X,
                   const EstimateOptions& options) {
    const Observed<double> obs = make_observed(k, Matrix(X));
    return estimate_mmd2(EstimatorKind::OW, k, c, sim, theta, m, points, seed, obs, options).mmd2;
}

}  // namespace owmmd
