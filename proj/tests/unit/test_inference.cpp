#include "owmmd/inference.hpp"
#include "owmmd/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace owmmd;

namespace {

struct Fixture {
    SimulatorSpec sim = make_gandk();
    Matrix X;
    KernelSpec k;

    explicit Fixture(Eigen::Index n = 300, std::uint64_t seed = 5) {
        X = sim.simulate(sim.theta_default, generate_points(sim.base, PointKind::IID, n, seed).points);
        k = KernelSpec::squared_exponential(median_heuristic(X));
    }

    [[nodiscard]] MmdObjective objective(EstimatorKind kind, Eigen::Index m = 40) const {
        return MmdObjective(sim, k, KernelChoice{KernelSpec::squared_exponential(1.0), true}, kind,
                            make_observed(k, X), m);
    }
};

MdeConfig small_mde() {
    MdeConfig cfg;
    cfg.trials = 8;
    cfg.restarts = 2;
    cfg.steps = 15;
    cfg.m = 40;
    cfg.init_ranges = {{2.0, 4.0}, {0.5, 2.0}, {0.5, 0.5}, {0.1, 0.1}};
    return cfg;
}

}  // namespace

TEST_CASE("pathwise gradient agrees with differences of the loss") {
    const Fixture f;
    const Vector theta{{2.7, 1.2, 0.4, 0.15}};
    const std::vector<bool> free(4, true);
    for (EstimatorKind kind : {EstimatorKind::VStat, EstimatorKind::OW}) {
        const MmdObjective obj = f.objective(kind);
        const Matrix U = obj.draw_points(11);
        const auto pw = obj.pathwise_gradient(theta, U, free, 1e-5);
        const auto fd = obj.loss_difference_gradient(theta, U, free, 1e-5);
        CHECK(pw.value == doctest::Approx(obj.loss_on(theta, U)).epsilon(1e-12));
        CHECK(fd.value == doctest::Approx(pw.value).epsilon(1e-12));
        CHECK((pw.gradient - fd.gradient).norm() <= 1e-5 * (1.0 + fd.gradient.norm()));
    }
}

TEST_CASE("pinned parameters get zero gradient") {
    const Fixture f;
    const MmdObjective obj = f.objective(EstimatorKind::OW);
    const Matrix U = obj.draw_points(3);
    const auto g = obj.pathwise_gradient(Vector{{3.0, 1.0, 0.5, 0.1}}, U, {true, false, true, false}, 1e-4);
    CHECK(g.gradient(1) == 0.0);
    CHECK(g.gradient(3) == 0.0);
    CHECK(g.gradient(0) != 0.0);
}

TEST_CASE("the fitted parameter is the best selection loss over trials and final iterates") {
    const Fixture f;
    const MmdObjective obj = f.objective(EstimatorKind::OW);
    const MdeConfig cfg = small_mde();
    const MdeResult r = mde_fit(obj, cfg, 42);
    REQUIRE(r.trial_losses.size() == 8);
    REQUIRE(r.restart_losses.size() == 2);
    CHECK(r.loss_paths[0].size() == 15);
    double best = std::numeric_limits<double>::infinity();
    for (double v : r.trial_losses) best = std::min(best, v);
    for (double v : r.restart_losses) best = std::min(best, v);
    CHECK(r.loss == best);
    CHECK(r.theta(2) == 0.5);
    CHECK(r.theta(3) == 0.1);
    CHECK(r.theta(0) >= 2.0);
    CHECK(r.theta(0) <= 4.0);
    for (const auto& t : r.restart_thetas) {
        CHECK(t(2) == 0.5);
        CHECK(t(3) == 0.1);
    }
    const MdeResult again = mde_fit(obj, cfg, 42);
    CHECK(again.theta == r.theta);
    CHECK(again.loss == r.loss);
}

TEST_CASE("optimisation moves towards the data-generating location") {
    const Fixture f(500, 9);
    const MmdObjective obj = f.objective(EstimatorKind::OW, 64);
    MdeConfig cfg;
    cfg.trials = 5;
    cfg.restarts = 1;
    cfg.steps = 150;
    cfg.step = 0.05;
    cfg.init_ranges = {{0.0, 6.0}, {1.0, 1.0}, {0.5, 0.5}, {0.1, 0.1}};
    const MdeResult r = mde_fit(obj, cfg, 1);
    CHECK(std::abs(r.theta(0) - 3.0) < 0.25);
}

TEST_CASE("loss-difference gradients drive the u-statistic") {
    const Fixture f;
    const MmdObjective obj = f.objective(EstimatorKind::UStat);
    MdeConfig cfg = small_mde();
    cfg.gradient = GradientMode::Pathwise;  // ignored for UStat
    const MdeResult r = mde_fit(obj, cfg, 4);
    CHECK(std::isfinite(r.loss));
    CHECK(r.diverged_restarts == 0);
}

TEST_CASE("a generator that always fails makes the fit fail") {
    Fixture f;
    SimulatorSpec broken = f.sim;
    broken.generator = [](const Vector&, const Eigen::Ref<const Matrix>& U) {
        return Matrix::Constant(U.rows(), 1, std::numeric_limits<double>::quiet_NaN());
    };
    const MmdObjective obj(broken, f.k, KernelChoice{KernelSpec::squared_exponential(1.0), true}, EstimatorKind::VStat,
                           make_observed(f.k, f.X), 20);
    CHECK_THROWS_AS(mde_fit(obj, small_mde(), 1), OptimizationFailedError);
}

TEST_CASE("mde configuration is validated") {
    MdeConfig cfg = small_mde();
    CHECK_NOTHROW(cfg.validate(4));
    CHECK_THROWS_AS(cfg.validate(3), ArgumentError);
    cfg.restarts = 9;
    CHECK_THROWS_AS(cfg.validate(4), ArgumentError);
    cfg = small_mde();
    cfg.init_ranges[0] = {4.0, 2.0};
    CHECK_THROWS_AS(cfg.validate(4), ArgumentError);
}

TEST_CASE("abc with every draw accepted returns all draws sorted by distance") {
    const Fixture f;
    AbcConfig cfg;
    cfg.prior_ranges = {{0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}};
    cfg.prior_draws = 40;
    cfg.accept_fraction = 1.0;
    const KernelChoice c{KernelSpec::squared_exponential(1.0), true};
    const Observed<double> obs = make_observed(f.k, f.X);
    const AbcResult all = abc_rejection(f.sim, f.k, c, EstimatorKind::OW, obs, cfg, 3);
    CHECK(all.accepted.size() == 40);
    CHECK(std::is_sorted(all.distances.begin(), all.distances.end()));

    cfg.accept_fraction = 0.1;
    const AbcResult few = abc_rejection(f.sim, f.k, c, EstimatorKind::OW, obs, cfg, 3);
    REQUIRE(few.accepted.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(few.accepted[i] == all.accepted[i]);
        CHECK(few.distances[i] == all.distances[i]);
    }
    const AbcResult threaded = abc_rejection(f.sim, f.k, c, EstimatorKind::OW, obs, cfg, 3, 3);
    CHECK(threaded.candidate_distances == few.candidate_distances);
    CHECK(threaded.distances == few.distances);

    cfg.accept_fraction = 0.0;
    CHECK_THROWS_AS(abc_rejection(f.sim, f.k, c, EstimatorKind::OW, obs, cfg, 3), ArgumentError);
}

TEST_CASE("abc treats failed simulations as infinitely far") {
    Fixture f;
    AbcConfig cfg;
    // A negative scale is outside the domain.
    cfg.prior_ranges = {{-1.0, 1.0}, {-1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}};
    cfg.prior_draws = 30;
    cfg.accept_fraction = 1.0;
    const AbcResult r = abc_rejection(f.sim, f.k, KernelChoice{KernelSpec::squared_exponential(1.0), true},
                                      EstimatorKind::VStat, make_observed(f.k, f.X), cfg, 8);
    int inf = 0;
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
        if (r.candidates[i](1) <= 0.0) {
            CHECK(std::isinf(r.candidate_distances[i]));
            ++inf;
        }
    }
    CHECK(inf > 0);
    CHECK(std::isinf(r.distances.back()));
}

TEST_CASE("nearest-rank quantile") {
    std::vector<double> v(200);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(200 - i);
    CHECK(nearest_rank_quantile(v, 0.95) == 190.0);
    CHECK(nearest_rank_quantile({7.0}, 0.95) == 7.0);
    CHECK(nearest_rank_quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
    CHECK(nearest_rank_quantile({3.0, 1.0, 2.0}, 1.0) == 3.0);
    CHECK_THROWS_AS(nearest_rank_quantile({}, 0.95), ArgumentError);
}

TEST_CASE("goodness-of-fit test runs with a single bootstrap and is deterministic") {
    const Fixture f(200, 13);
    GofConfig cfg;
    cfg.bootstrap = 1;
    cfg.m = 30;
    cfg.n = 200;
    MdeConfig mde = small_mde();
    mde.m = 30;
    const KernelChoice c{KernelSpec::squared_exponential(1.0), true};
    const GofResult a = gof_test(f.sim, f.k, c, f.X, cfg, mde, 77);
    CHECK(a.bootstrap_draws.size() == 1);
    CHECK(a.failures == 0);
    CHECK(a.critical_value == a.bootstrap_draws[0]);
    CHECK(a.reject == (a.statistic > a.critical_value));
    const GofResult b = gof_test(f.sim, f.k, c, f.X, cfg, mde, 77, 2);
    CHECK(a.statistic == b.statistic);
    CHECK(a.critical_value == b.critical_value);
    CHECK(a.theta_hat == b.theta_hat);

    cfg.bootstrap = 4;
    const GofResult d1 = gof_test(f.sim, f.k, c, f.X, cfg, mde, 5, 1);
    const GofResult d3 = gof_test(f.sim, f.k, c, f.X, cfg, mde, 5, 3);
    CHECK(d1.bootstrap_draws == d3.bootstrap_draws);

    cfg.alpha = 1.5;
    CHECK_THROWS_AS(gof_test(f.sim, f.k, c, f.X, cfg, mde, 5), ArgumentError);
}
