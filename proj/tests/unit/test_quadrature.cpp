#include "owmmd/quadrature.hpp"

#include <doctest.h>

#include <cmath>

using namespace owmmd;

TEST_CASE("gauss-hermite integrates normal moments") {
    const QuadratureRule rule = gauss_hermite(20);
    CHECK(rule.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    auto moment = [&](int k) { return (rule.weights.array() * rule.nodes.array().pow(k)).sum(); };
    CHECK(std::abs(moment(1)) < 1e-13);
    CHECK(moment(2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(moment(4) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(moment(10) == doctest::Approx(945.0).epsilon(1e-10));
    const double e_cos = (rule.weights.array() * rule.nodes.array().cos()).sum();
    CHECK(e_cos == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("simpson rule is exact for cubics and uses an odd node count") {
    const QuadratureRule rule = simpson_unit_interval(10);
    CHECK(rule.nodes.size() == 11);
    CHECK(rule.nodes(0) == 0.0);
    CHECK(rule.nodes(10) == 1.0);
    const double cubic = (rule.weights.array() * (rule.nodes.array().cube() - 2.0 * rule.nodes.array())).sum();
    CHECK(cubic == doctest::Approx(0.25 - 1.0).epsilon(1e-14));
    const QuadratureRule fine = simpson_unit_interval(2001);
    CHECK((fine.weights.array() * fine.nodes.array().exp()).sum() == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-13));
}
