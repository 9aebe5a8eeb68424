#pragma once

#include "owmmd/common.hpp"
#include "owmmd/estimators.hpp"
#include "owmmd/simulators.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace owmmd {

/// Closed interval for one parameter; lo == hi pins the parameter.
struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] bool fixed() const noexcept { return lo == hi; }
};

/// Squared-MMD loss of a simulator against one observed sample, evaluated with
/// a chosen estimator on m simulated points.
class MmdObjective {
public:
    MmdObjective(const SimulatorSpec& sim, const KernelSpec& k, KernelChoice c, EstimatorKind kind,
                 Observed<double> observed, Eigen::Index m, EstimateOptions options = {});

    /// Loss with fresh iid base points drawn from `seed`.
    [[nodiscard]] double loss(const Vector& theta, std::uint64_t seed) const;

    /// Loss on caller-supplied base points (common random numbers).
    [[nodiscard]] double loss_on(const Vector& theta, const Eigen::Ref<const Matrix>& U) const;

    struct ValueAndGradient {
        double value = 0.0;
        Vector gradient;
    };

    /// Pathwise gradient on fixed base points: exact kernel derivatives chained
    /// with central differences of the generator, dy/dtheta_j ~
    /// (G(theta + h e_j, u) - G(theta - h e_j, u)) / 2h, h = rel_eps (1 + |theta_j|).
    /// Pinned parameters get a zero gradient. VStat and OW only.
    [[nodiscard]] ValueAndGradient pathwise_gradient(const Vector& theta, const Eigen::Ref<const Matrix>& U,
                                                     const std::vector<bool>& free, double rel_eps) const;

    /// Central differences of the loss itself on fixed base points; works for
    /// every estimator at 2p extra loss evaluations.
    [[nodiscard]] ValueAndGradient loss_difference_gradient(const Vector& theta, const Eigen::Ref<const Matrix>& U,
                                                            const std::vector<bool>& free, double rel_eps) const;

    [[nodiscard]] Matrix draw_points(std::uint64_t seed) const;
    [[nodiscard]] const SimulatorSpec& simulator() const noexcept { return sim_; }
    [[nodiscard]] const Observed<double>& observed() const noexcept { return obs_; }
    [[nodiscard]] EstimatorKind kind() const noexcept { return kind_; }
    [[nodiscard]] Eigen::Index m() const noexcept { return m_; }

private:
    [[nodiscard]] Vector weights_for(const Eigen::Ref<const Matrix>& U) const;

    SimulatorSpec sim_;
    KernelSpec k_;
    KernelChoice c_;
    EstimatorKind kind_;
    Observed<double> obs_;
    Eigen::Index m_;
    EstimateOptions options_;
};

// ---- Minimum-distance estimation ------------------------------------------------

enum class GradientMode { Pathwise, LossDifference };

/// Random-restart optimiser settings. Defaults follow the composite test
/// experiments: 50 trials, 10 restarts, 200 Adam steps of size 0.04, m = 100.
struct MdeConfig {
    int trials = 50;      // I
    int restarts = 10;    // R
    int steps = 200;      // S
    double step = 0.04;   // Adam step size
    std::vector<ParamRange> init_ranges;
    Eigen::Index m = 100;
    double grad_eps = 1e-4;  // relative: h_j = grad_eps * (1 + |theta_j|)
    GradientMode gradient = GradientMode::Pathwise;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate(Eigen::Index theta_dim) const;
};

struct MdeResult {
    Vector theta;
    double loss = std::numeric_limits<double>::infinity();
    std::vector<Vector> trial_thetas;
    std::vector<double> trial_losses;
    std::vector<Vector> restart_thetas;    // final iterate per restart
    std::vector<double> restart_losses;    // selection loss at the final iterate
    std::vector<std::vector<double>> loss_paths;  // per restart, loss at every step
    int diverged_restarts = 0;
};

/// Trials are drawn uniformly from init_ranges and scored on one common set
/// of base points; the R best start Adam runs with fresh base points at every
/// step and projection back onto the box. Final iterates are scored on the same
/// common points, and the best of all trials and final iterates is returned.
/// Throws OptimizationFailedError if every restart diverges.
MdeResult mde_fit(const MmdObjective& objective, const MdeConfig& cfg, std::uint64_t seed);

// ---- Rejection ABC ----------------------------------------------------------------

struct AbcConfig {
    std::vector<ParamRange> prior_ranges;
    int prior_draws = 1000;
    double accept_fraction = 0.05;  // epsilon as a percentile
    Eigen::Index m = 10;
    PointKind points = PointKind::IID;

    void validate(Eigen::Index theta_dim) const;
};

struct AbcResult {
    std::vector<Vector> accepted;     // ascending distance
    std::vector<double> distances;    // matching accepted
    std::vector<Vector> candidates;   // every prior draw, in draw order
    std::vector<double> candidate_distances;
};

/// Draw parameters from the uniform prior box, estimate MMD^2 to the data for
/// each with m simulations, and accept the ceil(fraction * N) closest. Ties keep
/// draw order. Failed simulations count as infinitely far.
AbcResult abc_rejection(const SimulatorSpec& sim, const KernelSpec& k, const KernelChoice& c,
                        EstimatorKind kind, const Observed<double>& observed, const AbcConfig& cfg,
                        std::uint64_t seed, int threads = 1, const EstimateOptions& options = {});

// ---- Composite goodness-of-fit -----------------------------------------------------

struct GofConfig {
    double alpha = 0.05;
    int bootstrap = 200;  // B
    Eigen::Index m = 100;
    Eigen::Index n = 500;
    EstimatorKind estimator = EstimatorKind::OW;

    void validate() const;
};

struct GofResult {
    bool reject = false;
    double statistic = 0.0;
    double critical_value = 0.0;
    std::vector<double> bootstrap_draws;  // in bootstrap index order, failures omitted
    int failures = 0;
    Vector theta_hat;
};

/// Nearest-rank upper quantile: the ceil(level * B)-th smallest value.
double nearest_rank_quantile(std::vector<double> values, double level);

/// Parametric-bootstrap composite test. Fit theta_hat on X, then for each
/// bootstrap b: draw n points from the fitted model, refit, and record the
/// MMD^2 between m fresh simulations at the refit and the bootstrap data. The
/// critical value is the nearest-rank (1 - alpha) quantile; reject when the
/// MMD^2 of m fresh simulations at theta_hat against X exceeds it. The kernel
/// k stays fixed across bootstraps. More than B/10 failed bootstraps throws
/// TestInvalidError.
GofResult gof_test(const SimulatorSpec& sim, const KernelSpec& k, const KernelChoice& c,
                   const Eigen::Ref<const Matrix>& X, const GofConfig& cfg, const MdeConfig& mde,
                   std::uint64_t seed, int threads = 1, const EstimateOptions& options = {});

}  // namespace owmmd
