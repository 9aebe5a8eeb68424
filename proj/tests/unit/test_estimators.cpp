#include "owmmd/estimators.hpp"
#include "owmmd/experiment.hpp"
#include "owmmd/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace owmmd;

namespace {

double brute_vstat(const KernelSpec& k, const Matrix& Y, const Matrix& X) {
    const double m = static_cast<double>(Y.rows()), n = static_cast<double>(X.rows());
    return gram(k, Y).sum() / (m * m) - 2.0 * gram(k, Y, X).sum() / (m * n) + gram(k, X).sum() / (n * n);
}

}  // namespace

TEST_CASE("v-statistic and u-statistic match direct double sums") {
    const Matrix Y = Matrix::Random(40, 2);
    const Matrix X = Matrix::Random(70, 2) * 1.3;
    const KernelSpec k = KernelSpec::squared_exponential(0.6);
    CHECK(mmd2_vstat(k, Y, X) == doctest::Approx(brute_vstat(k, Y, X)).epsilon(1e-12));

    const Matrix Kyy = gram(k, Y), Kxx = gram(k, X);
    const double m = 40, n = 70;
    const double u = (Kyy.sum() - Kyy.trace()) / (m * (m - 1)) + (Kxx.sum() - Kxx.trace()) / (n * (n - 1)) -
                     2.0 * gram(k, Y, X).sum() / (m * n);
    CHECK(mmd2_ustat(k, Y, X) == doctest::Approx(u).epsilon(1e-12));
    CHECK_THROWS_AS(mmd2_ustat(k, Matrix(Y.topRows(1)), X), ArgumentError);
    CHECK_THROWS_AS(mmd2_vstat(k, Y, Matrix(X.leftCols(1))), ArgumentError);
}

TEST_CASE("blocked kernel sums agree with dense gram sums") {
    const Matrix A = Matrix::Random(1100, 3);
    const Matrix B = Matrix::Random(700, 3);
    const KernelSpec k = KernelSpec::matern(1.5, 0.8);
    CHECK(kernel_total(k, A) == doctest::Approx(gram(k, A).sum()).epsilon(1e-12));
    CHECK(kernel_total(k, A, B) == doctest::Approx(gram(k, A, B).sum()).epsilon(1e-12));
    CHECK((kernel_column_sums(k, A, B) - gram(k, A, B).colwise().sum().transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("estimators are templated on the scalar type") {
    const Matrix Y = Matrix::Random(30, 2);
    const Matrix X = Matrix::Random(50, 2);
    const KernelSpec k = KernelSpec::squared_exponential(0.9);
    const MatrixX<long double> Yl = Y.cast<long double>();
    const MatrixX<long double> Xl = X.cast<long double>();
    const long double vl = mmd2_vstat(k, Yl, Xl);
    CHECK(static_cast<double>(vl) == doctest::Approx(mmd2_vstat(k, Y, X)).epsilon(1e-12));
    const MatrixX<float> Yf = Y.cast<float>();
    const MatrixX<float> Xf = X.cast<float>();
    CHECK(static_cast<double>(mmd2_vstat(k, Yf, Xf)) == doctest::Approx(mmd2_vstat(k, Y, X)).epsilon(1e-3));
}

TEST_CASE("uniform weights reduce the weighted estimator to the v-statistic") {
    const Matrix Y = Matrix::Random(25, 1);
    const Matrix X = Matrix::Random(60, 1);
    const KernelSpec k = KernelSpec::squared_exponential(0.5);
    const Vector w = Vector::Constant(25, 1.0 / 25.0);
    CHECK(mmd2_weighted(k, Y, w, X) == doctest::Approx(mmd2_vstat(k, Y, X)).epsilon(1e-12));
    CHECK_THROWS_AS(mmd2_weighted(k, Y, Vector(Vector::Ones(3)), X), ArgumentError);
}

TEST_CASE("optimal weights solve the regularized embedding system") {
    const BaseMeasure base = BaseMeasure::standard_normal(2);
    const Matrix U = generate_points(base, PointKind::IID, 50, 4).points;
    const KernelSpec c = KernelSpec::squared_exponential(0.8);
    const OptimalWeights ow = optimal_weights(c, U, base);
    Matrix A = gram(c, U);
    CHECK(ow.jitter == doctest::Approx(1e-8 * A.diagonal().mean()));
    A.diagonal().array() += ow.jitter;
    CHECK((A * ow.weights - ow.embedding).norm() < 1e-8 * ow.embedding.norm());
    for (Eigen::Index i = 0; i < 50; ++i) {
        CHECK(ow.embedding(i) == doctest::Approx(embed_se_gaussian(c, U.row(i).transpose(), base)).epsilon(1e-14));
    }
}

TEST_CASE("jitter schedule handles singular systems") {
    const BaseMeasure base = BaseMeasure::uniform(1);
    Matrix U(4, 1);
    U << 0.2, 0.2, 0.7, 0.7;  // duplicated rows: the gram matrix is singular
    JitterPolicy exact;
    exact.try_exact_first = true;
    const OptimalWeights ow = optimal_weights(KernelSpec::squared_exponential(0.3), U, base, exact);
    CHECK(ow.jitter > 0.0);
    CHECK(ow.weights.allFinite());
    CHECK(ow.weights(0) == doctest::Approx(ow.weights(1)));
}

TEST_CASE("weighted bound is an equality for a linear generator") {
    // G(u) = a + b u with SE k of lengthscale l makes k(G(u), G(v)) an SE kernel
    // in u with lengthscale l / |b|, so MMD_k(P, P^{m,w}) = MMD_c(U, sum w delta_u).
    SimulatorSpec sim;
    sim.name = "linear";
    sim.s = sim.d = 1;
    sim.base = BaseMeasure::standard_normal(1);
    sim.theta_dim = 2;
    sim.theta_default = Vector{{0.5, -1.7}};
    sim.generator = [](const Vector& t, const Eigen::Ref<const Matrix>& U) { return Matrix((t(0) + t(1) * U.array()).matrix()); };
    const double lk = 1.1;
    const KernelSpec k = KernelSpec::squared_exponential(lk);
    const KernelSpec c = KernelSpec::squared_exponential(lk / 1.7);
    for (std::uint64_t seed : {1, 2, 3}) {
        const Matrix U = generate_points(sim.base, PointKind::IID, 20, seed).points;
        const Matrix Y = sim.simulate(sim.theta_default, U);
        Rng rng(seed);
        Vector w(20);
        for (Eigen::Index i = 0; i < 20; ++i) w(i) = rng.uniform(-0.05, 0.15);
        const double lhs = mmd2_to_model_quadrature(k, sim, sim.theta_default, Y, w, 200);
        const double rhs = mmd_c_objective(c, sim.base, U, w);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
        const OptimalWeights ow = optimal_weights(c, U, sim.base);
        CHECK(mmd2_to_model_quadrature(k, sim, sim.theta_default, Y, ow.weights, 200) <= lhs);
    }
}

TEST_CASE("optimal weights beat random weights on the base-space objective") {
    const BaseMeasure base = BaseMeasure::uniform(2);
    const Matrix U = generate_points(base, PointKind::IID, 30, 8).points;
    const KernelSpec c = KernelSpec::squared_exponential(0.4);
    const OptimalWeights ow = optimal_weights(c, U, base);
    const double best = mmd_c_objective(c, base, U, ow.weights);
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        Vector w(30);
        for (Eigen::Index i = 0; i < 30; ++i) w(i) = rng.uniform(-0.1, 0.2);
        CHECK(best <= mmd_c_objective(c, base, U, w) + 1e-10 + ow.jitter * w.squaredNorm());
    }
}

TEST_CASE("estimate pipeline reports cost counters") {
    const SimulatorSpec sim = make_gandk();
    const Matrix X = sim.simulate(sim.theta_default, generate_points(sim.base, PointKind::IID, 300, 1).points);
    const KernelSpec k = KernelSpec::squared_exponential(median_heuristic(X));
    const Observed<double> obs = make_observed(k, X);
    const KernelChoice c{KernelSpec::squared_exponential(1.0), true};
    const EstimateResult v = estimate_mmd2(EstimatorKind::VStat, k, c, sim, sim.theta_default, 64, PointKind::RQMC, 3, obs);
    const EstimateResult o = estimate_mmd2(EstimatorKind::OW, k, c, sim, sim.theta_default, 64, PointKind::RQMC, 3, obs);
    CHECK(v.solve_dim == 0);
    CHECK(o.solve_dim == 64);
    CHECK(v.kernel_evals == 64 * 64 + 64 * 300);
    CHECK(o.kernel_evals == 2 * 64 * 64 + 64 * 300);
    CHECK(o.c_lengthscale > 0.0);
    CHECK(o.mmd2 == doctest::Approx(ow_estimate(k, c, sim, sim.theta_default, 64, PointKind::RQMC, 3, X)).epsilon(1e-12));
    CHECK(estimator_from_string("ow") == EstimatorKind::OW);
    CHECK_THROWS_AS(estimator_from_string("OW"), ArgumentError);
}

TEST_CASE("weighted samples carry their base points") {
    const SimulatorSpec sim = make_two_moons();
    const Matrix U = generate_points(sim.base, PointKind::IID, 16, 2).points;
    const WeightedSample s = WeightedSample::uniform(sim, sim.theta_default, U);
    CHECK(s.outputs.rows() == 16);
    CHECK(s.weights.sum() == doctest::Approx(1.0));
    const Matrix X = sim.simulate(sim.theta_default, generate_points(sim.base, PointKind::IID, 50, 3).points);
    const KernelSpec k = KernelSpec::squared_exponential(0.2);
    CHECK(mmd2_weighted(k, s, make_observed(k, X)) == doctest::Approx(mmd2_vstat(k, s.outputs, X)).epsilon(1e-12));
}

TEST_CASE("squared estimates stay nonnegative on fuzzed inputs") {
    Rng rng(123);
    for (int t = 0; t < 200; ++t) {
        const auto m = static_cast<Eigen::Index>(2 + rng.next_u64() % 30);
        const auto n = static_cast<Eigen::Index>(2 + rng.next_u64() % 30);
        const auto d = static_cast<Eigen::Index>(1 + rng.next_u64() % 3);
        Matrix Y(m, d), X(n, d);
        for (Eigen::Index i = 0; i < Y.size(); ++i) Y(i) = rng.normal() * 3.0;
        for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = rng.normal();
        const KernelSpec k = KernelSpec::squared_exponential(rng.uniform(0.05, 5.0));
        CHECK(mmd2_vstat(k, Y, X) >= -1e-12);
        Vector w(m);
        for (Eigen::Index i = 0; i < m; ++i) w(i) = rng.uniform(-1.0, 1.0);
        CHECK(mmd2_weighted(k, Y, w, X) >= -1e-8);
    }
}
