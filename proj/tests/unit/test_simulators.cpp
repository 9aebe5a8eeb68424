#include "owmmd/random.hpp"
#include "owmmd/sampling.hpp"
#include "owmmd/simulators.hpp"

#include <doctest.h>

#include <cmath>

using namespace owmmd;

namespace {

double gandk_scalar(double A, double B, double g, double k, double z) {
    return A + B * (1.0 + 0.8 * (1.0 - std::exp(-g * z)) / (1.0 + std::exp(-g * z))) * std::pow(1.0 + z * z, k) * z;
}

}  // namespace

TEST_CASE("univariate g-and-k quantile map") {
    const Vector theta{{3.0, 1.0, 0.1, 0.1}};
    for (double z : {-2.5, -0.3, 0.0, 0.7, 3.0}) {
        CHECK(gandk_generate(theta, Vector{{z}})(0) == doctest::Approx(gandk_scalar(3, 1, 0.1, 0.1, z)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(gandk_generate(Vector{{3.0, -1.0, 0.1, 0.1}}, Vector{{0.0}}), ArgumentError);
    CHECK_THROWS_AS(gandk_generate(Vector{{3.0, 1.0, 0.1}}, Vector{{0.0}}), ArgumentError);
}

TEST_CASE("multivariate g-and-k correlates coordinates through the symmetric square root") {
    const Matrix S = gandk_correlation_sqrt(0.3, 3);
    Matrix sigma = Matrix::Identity(3, 3);
    sigma(0, 1) = sigma(1, 0) = sigma(1, 2) = sigma(2, 1) = 0.3;
    CHECK((S * S - sigma).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(gandk_correlation_sqrt(0.9, 3), ArgumentError);  // 1 - 0.9 sqrt(2) < 0
    CHECK_NOTHROW(gandk_correlation_sqrt(0.9, 2));

    const Vector theta{{3.0, 1.0, 0.1, 0.1, 0.4}};
    const Vector u{{0.5, -1.0}};
    const Vector z = gandk_correlation_sqrt(0.4, 2) * u;
    const Vector x = gandk_generate(theta, u);
    for (int j = 0; j < 2; ++j) CHECK(x(j) == doctest::Approx(gandk_scalar(3, 1, 0.1, 0.1, z(j))).epsilon(1e-14));
}

TEST_CASE("two moons at the origin parameter") {
    const Vector x = two_moons_generate(Vector::Zero(2), Vector{{0.5, 0.5}});
    CHECK(x(0) == doctest::Approx(0.35).epsilon(1e-15));
    CHECK(std::abs(x(1)) < 1e-15);
}

TEST_CASE("bivariate beta marginals lie in the unit square") {
    const SimulatorSpec sim = make_bivariate_beta();
    const Matrix U = generate_points(sim.base, PointKind::IID, 500, 3).points;
    const Matrix X = sim.simulate(Vector{{1.0, 2.0, 0.5, 3.0, 1.5}}, U);
    CHECK((X.array() > 0.0).all());
    CHECK((X.array() < 1.0).all());
    CHECK_THROWS_AS(bivariate_beta_generate(Vector{{1.0, 0.0, 1.0, 1.0, 1.0}}, Vector::Constant(5, 0.5)), ArgumentError);
}

TEST_CASE("ma2 is a moving average of the noise") {
    Vector u = Vector::LinSpaced(12, 1.0, 12.0);
    const Vector x = ma2_generate(Vector{{0.6, 0.2}}, u);
    CHECK(x.size() == 10);
    CHECK(x(0) == doctest::Approx(3.0 + 0.6 * 2.0 + 0.2 * 1.0));
    CHECK(x(9) == doctest::Approx(12.0 + 0.6 * 11.0 + 0.2 * 10.0));
}

TEST_CASE("m/g/1 lindley recursion") {
    Vector u(10);
    u << 0.0, 0.5, 1.0, 0.25, 0.75, 0.5, 0.5, 0.5, 0.5, 0.5;
    const Vector theta{{1.0, 5.0, 0.2}};
    const Vector x = mg1_generate(theta, u);
    const double gap = std::log(2.0) / 0.2;  // exponential quantile at 1/2
    // Customer 1 arrives at gap, served for 1: departs gap + 1.
    CHECK(x(0) == doctest::Approx(gap + 1.0));
    // Customer 2 arrives at 2 gap, after customer 1 left, and is served for 3.
    CHECK(x(1) == doctest::Approx(gap + 2.0).epsilon(1e-12));
    CHECK((x.array() >= 1.0).all());  // inter-departure times exceed the minimum service time
    CHECK_THROWS_AS(mg1_generate(Vector{{5.0, 1.0, 0.2}}, u), ArgumentError);
    CHECK_THROWS_AS(mg1_generate(Vector{{1.0, 5.0, 0.0}}, u), ArgumentError);
}

TEST_CASE("lotka-volterra euler scheme converges at first order") {
    const Vector theta{{0.5, 0.005, 0.6}};
    auto endpoint = [&](double dt) {
        LotkaVolterraConstants c;
        c.sigma_prey = c.sigma_predator = 0.0;
        c.dt = dt;
        c.steps = static_cast<int>(std::lround(2.0 / dt));
        return lotka_volterra_generate(theta, Vector::Zero(2 * c.steps), c);
    };
    const Vector ref = endpoint(1e-5);
    const double e1 = (endpoint(0.02) - ref).norm();
    const double e2 = (endpoint(0.01) - ref).norm();
    const double e3 = (endpoint(0.005) - ref).norm();
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));
    CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("lotka-volterra keeps populations nonnegative and flags overflow") {
    const SimulatorSpec sim = make_lotka_volterra();
    CHECK(sim.s == 600);
    const Matrix U = generate_points(sim.base, PointKind::IID, 5, 1).points;
    const Matrix X = sim.simulate(sim.theta_default, U);
    CHECK((X.array() >= 0.0).all());
    LotkaVolterraConstants c;
    c.steps = 2000;
    c.dt = 1.0;
    CHECK_THROWS_AS(lotka_volterra_generate(Vector{{300.0, 1e-300, 1.0}}, Vector::Zero(4000), c), SimulationDivergedError);
}

TEST_CASE("registry and uniform reformulation") {
    for (const auto& name : simulator_names()) {
        const SimulatorSpec sim = make_simulator(name);
        CHECK(sim.theta_default.size() == sim.theta_dim);
        const Matrix U = generate_points(sim.base, PointKind::IID, 4, 2).points;
        const Matrix X = sim.simulate(sim.theta_default, U);
        CHECK(X.rows() == 4);
        CHECK(X.cols() == sim.d);
        CHECK(X.allFinite());
    }
    CHECK_THROWS_AS(make_simulator("nope"), ArgumentError);

    const SimulatorSpec g = make_gandk();
    const SimulatorSpec gu = uniform_formulation(g);
    CHECK(gu.base.is_uniform());
    Matrix u(1, 1);
    u << 0.8413447460685429;  // Phi(1)
    CHECK(gu.simulate(g.theta_default, u)(0, 0) == doctest::Approx(gandk_scalar(3, 1, 0.1, 0.1, 1.0)).epsilon(1e-12));
}
