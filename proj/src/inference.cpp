#include "owmmd/inference.hpp"

#include "owmmd/parallel.hpp"
#include "owmmd/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

namespace owmmd {

namespace {

using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>;

constexpr double kInf = std::numeric_limits<double>::infinity();

Array scaled_sq_dist(const KernelSpec& k, const Matrix& A, const Matrix& B) {
    const Vector a2 = A.rowwise().squaredNorm();
    const Vector b2 = B.rowwise().squaredNorm();
    Matrix cross = -2.0 * (A * B.transpose());
    cross.colwise() += a2;
    cross.rowwise() += b2.transpose();
    return cross.array().max(0.0) / (k.lengthscale * k.lengthscale);
}

// Kernel values and eta * (rho'(r)/r) / l^2, so grad_a k(a, b) = S(a, b) (a - b).
void values_and_slopes(const KernelSpec& k, const Matrix& A, const Matrix& B, Array& K, Array& S) {
    const Array r2 = scaled_sq_dist(k, A, B);
    K = r2;
    detail::apply_profile(k, K);
    K *= k.amplitude;
    S = r2.unaryExpr([&](double v) { return detail::radial_slope_over_r(k, v); });
    S *= k.amplitude / (k.lengthscale * k.lengthscale);
}

bool is_domain_failure(const std::exception& e) {
    return dynamic_cast<const ArgumentError*>(&e) != nullptr ||
           dynamic_cast<const SimulationDivergedError*>(&e) != nullptr ||
           dynamic_cast<const NumericalConditioningError*>(&e) != nullptr ||
           dynamic_cast<const DegenerateDataError*>(&e) != nullptr;
}

void validate_ranges(const std::vector<ParamRange>& ranges, Eigen::Index theta_dim, const char* what) {
    if (static_cast<Eigen::Index>(ranges.size()) != theta_dim) {
        throw ArgumentError(std::string(what) + ": expected " + std::to_string(theta_dim) + " ranges, got " +
                            std::to_string(ranges.size()));
    }
    for (const auto& r : ranges) {
        if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
            throw ArgumentError(std::string(what) + ": each range needs finite lo <= hi");
        }
    }
}

Vector draw_in_box(const std::vector<ParamRange>& ranges, Rng& rng) {
    Vector theta(static_cast<Eigen::Index>(ranges.size()));
    for (std::size_t j = 0; j < ranges.size(); ++j) {
        const auto& r = ranges[j];
        theta(static_cast<Eigen::Index>(j)) = r.fixed() ? r.lo : rng.uniform(r.lo, r.hi);
    }
    return theta;
}

void project(Vector& theta, const std::vector<ParamRange>& ranges) {
    for (std::size_t j = 0; j < ranges.size(); ++j) {
        auto& t = theta(static_cast<Eigen::Index>(j));
        t = std::clamp(t, ranges[j].lo, ranges[j].hi);
    }
}

}  // namespace

// ---- MmdObjective -------------------------------------------------------------------

MmdObjective::MmdObjective(const SimulatorSpec& sim, const KernelSpec& k, KernelChoice c, EstimatorKind kind,
                           Observed<double> observed, Eigen::Index m, EstimateOptions options)
    : sim_(sim), k_(k), c_(std::move(c)), kind_(kind), obs_(std::move(observed)), m_(m), options_(options) {
    k_.validate();
    if (m_ < 1) {
        throw ArgumentError("MmdObjective: m must be positive");
    }
    if (kind_ == EstimatorKind::UStat && m_ < 2) {
        throw ArgumentError("MmdObjective: the U-statistic needs m >= 2");
    }
    if (obs_.X.cols() != sim_.d) {
        throw ArgumentError("MmdObjective: observed dimension does not match the simulator");
    }
}

Matrix MmdObjective::draw_points(std::uint64_t seed) const {
    return generate_points(sim_.base, PointKind::IID, m_, seed).points;
}

double MmdObjective::loss(const Vector& theta, std::uint64_t seed) const { return loss_on(theta, draw_points(seed)); }

double MmdObjective::loss_on(const Vector& theta, const Eigen::Ref<const Matrix>& U) const {
    return estimate_on_points(kind_, k_, c_, sim_, theta, U, obs_, options_).mmd2;
}

Vector MmdObjective::weights_for(const Eigen::Ref<const Matrix>& U) const {
    const Eigen::Index m = U.rows();
    if (kind_ == EstimatorKind::VStat) {
        return Vector::Constant(m, 1.0 / static_cast<double>(m));
    }
    if (kind_ == EstimatorKind::OW) {
        const KernelSpec c = m >= 2 ? c_.resolve(U) : c_.spec;
        return optimal_weights(c, U, sim_.base, options_.jitter, options_.embedding).weights;
    }
    throw ArgumentError("pathwise gradient is defined for weighted estimators (vstat, ow) only");
}

MmdObjective::ValueAndGradient MmdObjective::pathwise_gradient(const Vector& theta,
                                                               const Eigen::Ref<const Matrix>& U,
                                                               const std::vector<bool>& free,
                                                               double rel_eps) const {
    const Eigen::Index p = theta.size();
    if (static_cast<Eigen::Index>(free.size()) != p) {
        throw ArgumentError("pathwise_gradient: mask size mismatch");
    }
    const Vector w = weights_for(U);
    const Matrix Y = sim_.simulate(theta, U);
    const Matrix& X = obs_.X;
    const auto n = static_cast<double>(X.rows());

    Array Kyy, Syy, Kyx, Syx;
    values_and_slopes(k_, Y, Y, Kyy, Syy);
    values_and_slopes(k_, Y, X, Kyx, Syx);

    ValueAndGradient out;
    const Vector cross_sums = Kyx.matrix().rowwise().sum();
    out.value = w.dot(Kyy.matrix() * w) - 2.0 / n * w.dot(cross_sums) + obs_.self_term;

    // dL/dy_j = 2 w_j sum_i w_i S_ji (y_j - y_i) - (2/n) w_j sum_i S^yx_ji (y_j - x_i)
    const Vector Sw = Syy.matrix() * w;
    const Matrix self_part = Sw.asDiagonal() * Y - Syy.matrix() * (w.asDiagonal() * Y);
    const Vector Sx1 = Syx.matrix().rowwise().sum();
    const Matrix cross_part = Sx1.asDiagonal() * Y - Syx.matrix() * X;
    const Matrix dLdY = w.asDiagonal() * (2.0 * self_part - (2.0 / n) * cross_part);

    out.gradient = Vector::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!free[static_cast<std::size_t>(j)]) continue;
        const double h = rel_eps * (1.0 + std::abs(theta(j)));
        Vector tp = theta, tm = theta;
        tp(j) += h;
        tm(j) -= h;
        Matrix dY;
        bool have_plus = true, have_minus = true;
        Matrix Yp, Ym;
        try {
            Yp = sim_.simulate(tp, U);
        } catch (const ArgumentError&) {
            have_plus = false;
        }
        try {
            Ym = sim_.simulate(tm, U);
        } catch (const ArgumentError&) {
            have_minus = false;
        }
        if (have_plus && have_minus) {
            dY = (Yp - Ym) / (2.0 * h);
        } else if (have_plus) {
            dY = (Yp - Y) / h;
        } else if (have_minus) {
            dY = (Y - Ym) / h;
        } else {
            throw ArgumentError("pathwise_gradient: generator undefined on both sides of parameter " +
                                std::to_string(j));
        }
        out.gradient(j) = (dLdY.array() * dY.array()).sum();
    }
    return out;
}

MmdObjective::ValueAndGradient MmdObjective::loss_difference_gradient(const Vector& theta,
                                                                      const Eigen::Ref<const Matrix>& U,
                                                                      const std::vector<bool>& free,
                                                                      double rel_eps) const {
    const Eigen::Index p = theta.size();
    if (static_cast<Eigen::Index>(free.size()) != p) {
        throw ArgumentError("loss_difference_gradient: mask size mismatch");
    }
    ValueAndGradient out;
    out.value = loss_on(theta, U);
    out.gradient = Vector::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!free[static_cast<std::size_t>(j)]) continue;
        const double h = rel_eps * (1.0 + std::abs(theta(j)));
        Vector tp = theta, tm = theta;
        tp(j) += h;
        tm(j) -= h;
        double lp = 0.0, lm = 0.0;
        bool have_plus = true, have_minus = true;
        try {
            lp = loss_on(tp, U);
        } catch (const ArgumentError&) {
            have_plus = false;
        }
        try {
            lm = loss_on(tm, U);
        } catch (const ArgumentError&) {
            have_minus = false;
        }
        if (have_plus && have_minus) {
            out.gradient(j) = (lp - lm) / (2.0 * h);
        } else if (have_plus) {
            out.gradient(j) = (lp - out.value) / h;
        } else if (have_minus) {
            out.gradient(j) = (out.value - lm) / h;
        } else {
            throw ArgumentError("loss_difference_gradient: loss undefined on both sides of parameter " +
                                std::to_string(j));
        }
    }
    return out;
}

// ---- MDE ----------------------------------------------------------------------------

void MdeConfig::validate(Eigen::Index theta_dim) const {
    if (trials < 1) throw ArgumentError("mde: trials must be >= 1");
    if (restarts < 1 || restarts > trials) throw ArgumentError("mde: restarts must be in [1, trials]");
    if (steps < 0) throw ArgumentError("mde: steps must be >= 0");
    if (!(step > 0.0) || !std::isfinite(step)) throw ArgumentError("mde: step size must be positive");
    if (m < 1) throw ArgumentError("mde: m must be positive");
    if (!(grad_eps > 0.0)) throw ArgumentError("mde: grad_eps must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
        throw ArgumentError("mde: invalid Adam constants");
    }
    validate_ranges(init_ranges, theta_dim, "mde init_ranges");
}

MdeResult mde_fit(const MmdObjective& objective, const MdeConfig& cfg, std::uint64_t seed) {
    const Eigen::Index p = objective.simulator().theta_dim;
    cfg.validate(p);
    std::vector<bool> free(static_cast<std::size_t>(p));
    for (std::size_t j = 0; j < free.size(); ++j) free[j] = !cfg.init_ranges[j].fixed();

    const bool pathwise =
        cfg.gradient == GradientMode::Pathwise && objective.kind() != EstimatorKind::UStat;

    auto safe_loss = [&](const Vector& theta, const Matrix& U) {
        try {
            const double v = objective.loss_on(theta, U);
            return std::isfinite(v) ? v : kInf;
        } catch (const std::exception& e) {
            if (is_domain_failure(e)) return kInf;
            throw;
        }
    };

    MdeResult result;
    const Matrix U_select = objective.draw_points(derive_seed(seed, {tag(Stage::MdeSelect)}));

    Rng trial_rng(derive_seed(seed, {tag(Stage::MdeTrial)}));
    result.trial_thetas.reserve(static_cast<std::size_t>(cfg.trials));
    for (int i = 0; i < cfg.trials; ++i) {
        result.trial_thetas.push_back(draw_in_box(cfg.init_ranges, trial_rng));
        result.trial_losses.push_back(safe_loss(result.trial_thetas.back(), U_select));
    }

    std::vector<std::size_t> order(static_cast<std::size_t>(cfg.trials));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return result.trial_losses[a] < result.trial_losses[b]; });

    for (int r = 0; r < cfg.restarts; ++r) {
        Vector theta = result.trial_thetas[order[static_cast<std::size_t>(r)]];
        Vector m1 = Vector::Zero(p), m2 = Vector::Zero(p);
        std::vector<double> path;
        path.reserve(static_cast<std::size_t>(cfg.steps));
        bool diverged = false;
        for (int t = 1; t <= cfg.steps; ++t) {
            const Matrix U = objective.draw_points(
                derive_seed(seed, {tag(Stage::MdeStep), static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(t)}));
            MmdObjective::ValueAndGradient vg;
            try {
                vg = pathwise ? objective.pathwise_gradient(theta, U, free, cfg.grad_eps)
                              : objective.loss_difference_gradient(theta, U, free, cfg.grad_eps);
            } catch (const std::exception& e) {
                if (!is_domain_failure(e)) throw;
                diverged = true;
                break;
            }
            if (!std::isfinite(vg.value) || !vg.gradient.allFinite()) {
                diverged = true;
                break;
            }
            path.push_back(vg.value);
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * vg.gradient;
            m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * vg.gradient.cwiseAbs2();
            const double c1 = 1.0 - std::pow(cfg.beta1, t);
            const double c2 = 1.0 - std::pow(cfg.beta2, t);
            theta.array() -= cfg.step * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_eps);
            project(theta, cfg.init_ranges);
        }
        const double final_loss = diverged ? kInf : safe_loss(theta, U_select);
        if (!std::isfinite(final_loss)) ++result.diverged_restarts;
        result.restart_thetas.push_back(theta);
        result.restart_losses.push_back(final_loss);
        result.loss_paths.push_back(std::move(path));
    }

    if (result.diverged_restarts == cfg.restarts) {
        std::string trace = "mde: all " + std::to_string(cfg.restarts) + " restarts diverged; best trial losses:";
        for (int r = 0; r < cfg.restarts; ++r) {
            trace += " " + std::to_string(result.trial_losses[order[static_cast<std::size_t>(r)]]);
        }
        throw OptimizationFailedError(trace);
    }

    for (std::size_t r = 0; r < result.restart_losses.size(); ++r) {
        if (result.restart_losses[r] < result.loss) {
            result.loss = result.restart_losses[r];
            result.theta = result.restart_thetas[r];
        }
    }
    for (std::size_t i = 0; i < result.trial_losses.size(); ++i) {
        if (result.trial_losses[i] < result.loss) {
            result.loss = result.trial_losses[i];
            result.theta = result.trial_thetas[i];
        }
    }
    return result;
}

// ---- ABC ----------------------------------------------------------------------------

void AbcConfig::validate(Eigen::Index theta_dim) const {
    if (prior_draws < 1) throw ArgumentError("abc: prior_draws must be >= 1");
    if (!(accept_fraction > 0.0 && accept_fraction <= 1.0)) {
        throw ArgumentError("abc: accept_fraction must be in (0, 1]");
    }
    if (m < 1) throw ArgumentError("abc: m must be positive");
    validate_ranges(prior_ranges, theta_dim, "abc prior_ranges");
}

AbcResult abc_rejection(const SimulatorSpec& sim, const KernelSpec& k, const KernelChoice& c, EstimatorKind kind,
                        const Observed<double>& observed, const AbcConfig& cfg, std::uint64_t seed, int threads,
                        const EstimateOptions& options) {
    cfg.validate(sim.theta_dim);
    const auto N = static_cast<std::size_t>(cfg.prior_draws);
    AbcResult out;
    out.candidates.resize(N);
    out.candidate_distances.assign(N, kInf);

    parallel_for(N, threads, [&](std::size_t i) {
        Rng rng(derive_seed(seed, {tag(Stage::AbcPrior), static_cast<std::uint64_t>(i)}));
        out.candidates[i] = draw_in_box(cfg.prior_ranges, rng);
        try {
            const double d = estimate_mmd2(kind, k, c, sim, out.candidates[i], cfg.m, cfg.points,
                                           derive_seed(seed, {tag(Stage::AbcCandidate), static_cast<std::uint64_t>(i)}),
                                           observed, options)
                                 .mmd2;
            out.candidate_distances[i] = std::isfinite(d) ? d : kInf;
        } catch (const std::exception& e) {
            if (!is_domain_failure(e)) throw;
        }
    });

    const auto accept = static_cast<std::size_t>(
        std::clamp(std::ceil(cfg.accept_fraction * static_cast<double>(N) - 1e-9), 1.0, static_cast<double>(N)));
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.candidate_distances[a] < out.candidate_distances[b];
    });
    for (std::size_t r = 0; r < accept; ++r) {
        out.accepted.push_back(out.candidates[order[r]]);
        out.distances.push_back(out.candidate_distances[order[r]]);
    }
    return out;
}

// ---- Goodness of fit ----------------------------------------------------------------

void GofConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("gof: alpha must be in (0, 1)");
    if (bootstrap < 1) throw ArgumentError("gof: bootstrap count must be >= 1");
    if (m < 1 || n < 1) throw ArgumentError("gof: m and n must be positive");
}

double nearest_rank_quantile(std::vector<double> values, double level) {
    if (values.empty()) throw ArgumentError("nearest_rank_quantile: no values");
    if (!(level > 0.0 && level <= 1.0)) throw ArgumentError("nearest_rank_quantile: level must be in (0, 1]");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(
        std::clamp(std::ceil(level * static_cast<double>(values.size()) - 1e-9), 1.0,
                   static_cast<double>(values.size())));
    return values[rank - 1];
}

GofResult gof_test(const SimulatorSpec& sim, const KernelSpec& k, const KernelChoice& c,
                   const Eigen::Ref<const Matrix>& X, const GofConfig& cfg, const MdeConfig& mde,
                   std::uint64_t seed, int threads, const EstimateOptions& options) {
    cfg.validate();
    mde.validate(sim.theta_dim);
    MdeConfig fit_cfg = mde;
    fit_cfg.m = cfg.m;

    GofResult out;
    const MmdObjective objective(sim, k, c, cfg.estimator, make_observed(k, Matrix(X)), cfg.m, options);
    out.theta_hat = mde_fit(objective, fit_cfg, derive_seed(seed, {tag(Stage::GofFit)})).theta;
    out.statistic = objective.loss(out.theta_hat, derive_seed(seed, {tag(Stage::GofStatistic)}));

    const auto B = static_cast<std::size_t>(cfg.bootstrap);
    std::vector<double> delta(B, kInf);
    std::vector<char> ok(B, 0);
    parallel_for(B, threads, [&](std::size_t b) {
        const auto bb = static_cast<std::uint64_t>(b);
        try {
            const Matrix Ub =
                generate_points(sim.base, PointKind::IID, cfg.n, derive_seed(seed, {tag(Stage::GofBootstrapData), bb}))
                    .points;
            const Matrix Xb = sim.simulate(out.theta_hat, Ub);
            const MmdObjective boot(sim, k, c, cfg.estimator, make_observed(k, Xb), cfg.m, options);
            const MdeResult fit = mde_fit(boot, fit_cfg, derive_seed(seed, {tag(Stage::GofBootstrapFit), bb}));
            const double d = boot.loss(fit.theta, derive_seed(seed, {tag(Stage::GofBootstrapDelta), bb}));
            if (std::isfinite(d)) {
                delta[b] = d;
                ok[b] = 1;
            }
        } catch (const OptimizationFailedError&) {
        } catch (const std::exception& e) {
            if (!is_domain_failure(e)) throw;
        }
    });

    for (std::size_t b = 0; b < B; ++b) {
        if (ok[b]) {
            out.bootstrap_draws.push_back(delta[b]);
        } else {
            ++out.failures;
        }
    }
    if (static_cast<double>(out.failures) > static_cast<double>(cfg.bootstrap) / 10.0) {
        throw TestInvalidError("gof: " + std::to_string(out.failures) + " of " + std::to_string(cfg.bootstrap) +
                               " bootstrap iterations failed");
    }
    out.critical_value = nearest_rank_quantile(out.bootstrap_draws, 1.0 - cfg.alpha);
    out.reject = out.statistic > out.critical_value;
    return out;
}

int threads_from_env(int fallback) {
    if (const char* env = std::getenv("OW_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1, fallback);
}

}  // namespace owmmd
