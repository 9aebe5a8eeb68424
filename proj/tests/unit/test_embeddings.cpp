#include "owmmd/embeddings.hpp"
#include "owmmd/random.hpp"
#include "owmmd/special_functions.hpp"

#include <doctest.h>

#include <cmath>

using namespace owmmd;

namespace {

// Composite trapezoid on [0, 1] with one million intervals.
double trapezoid_uniform(const KernelSpec& c, double u) {
    const int n = 1000000;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double v = static_cast<double>(i) / n;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        sum += w * c.amplitude * detail::radial_profile(c, (u - v) * (u - v) / (c.lengthscale * c.lengthscale));
    }
    return sum / n;
}

Vector vec1(double x) {
    Vector v(1);
    v(0) = x;
    return v;
}

}  // namespace

TEST_CASE("uniform embedding matches a fine trapezoid oracle") {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        const KernelSpec c = KernelSpec::squared_exponential(rng.uniform(0.05, 3.0), rng.uniform(0.5, 2.0));
        const double u = rng.uniform();
        CHECK(embed_se_uniform(c, vec1(u)) == doctest::Approx(trapezoid_uniform(c, u)).epsilon(1e-9));
    }
}

TEST_CASE("uniform embedding is a product over coordinates") {
    const KernelSpec c = KernelSpec::squared_exponential(0.4);
    Vector u(3);
    u << 0.1, 0.5, 0.95;
    const double prod = embed_se_uniform(c, vec1(0.1)) * embed_se_uniform(c, vec1(0.5)) * embed_se_uniform(c, vec1(0.95));
    CHECK(embed_se_uniform(c, u) == doctest::Approx(prod).epsilon(1e-14));
}

TEST_CASE("gaussian embedding matches gauss-hermite and monte carlo oracles") {
    Rng rng(2);
    for (int i = 0; i < 10; ++i) {
        const KernelSpec c = KernelSpec::squared_exponential(rng.uniform(0.3, 3.0));
        Vector mean(2), var(2), u(2);
        mean << rng.uniform(-1, 1), rng.uniform(-1, 1);
        var << rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0);
        u << rng.uniform(-2, 2), rng.uniform(-2, 2);
        const BaseMeasure base = BaseMeasure::gaussian(mean, var);
        const double exact = embed_se_gaussian(c, u, base);
        CHECK(embed_quadrature(c, base, u, 120) == doctest::Approx(exact).epsilon(1e-10));

        const std::int64_t N = 200000;
        const double mc = embed_mc_oracle(c, base, u, N, 77 + i);
        // c <= amplitude, so the per-sample variance is at most amplitude^2 / 4.
        CHECK(std::abs(mc - exact) <= 4.0 * 0.5 / std::sqrt(static_cast<double>(N)));
    }
}

TEST_CASE("double integrals agree between closed form and quadrature") {
    Vector mean(2), var(2);
    mean << 0.3, -1.0;
    var << 0.5, 2.0;
    const BaseMeasure g = BaseMeasure::gaussian(mean, var);
    const KernelSpec c = KernelSpec::squared_exponential(0.9, 1.3);
    const double closed = double_embed(c, g, DoubleEmbedMethod::closed_form());
    const double expect = 1.3 * std::sqrt(0.81 / (0.81 + 1.0)) * std::sqrt(0.81 / (0.81 + 4.0));
    CHECK(closed == doctest::Approx(expect).epsilon(1e-14));
    CHECK(double_embed(c, g, DoubleEmbedMethod::quadrature(100)) == doctest::Approx(closed).epsilon(1e-10));

    const BaseMeasure u1 = BaseMeasure::uniform(1);
    const KernelSpec c1 = KernelSpec::squared_exponential(0.3);
    const double l = 0.3;
    const double exact = 2.0 * (l * std::sqrt(2 * M_PI) * (norm_cdf(1.0 / l) - 0.5) - l * l * (1.0 - std::exp(-0.5 / (l * l))));
    CHECK(double_embed(c1, u1, DoubleEmbedMethod::quadrature(4001)) == doctest::Approx(exact).epsilon(1e-10));
    CHECK(double_embed(c1, u1, DoubleEmbedMethod::closed_form()) == doctest::Approx(exact).epsilon(1e-14));
    const KernelSpec wide = KernelSpec::squared_exponential(50.0, 2.0);
    CHECK(double_embed(wide, BaseMeasure::uniform(2), DoubleEmbedMethod::closed_form()) ==
          doctest::Approx(double_embed(wide, BaseMeasure::uniform(2), DoubleEmbedMethod::quadrature(2001))).epsilon(1e-12));
    CHECK_THROWS_AS(double_embed(KernelSpec::matern(1.5, 0.3), u1, DoubleEmbedMethod::closed_form()),
                    UnsupportedEmbeddingError);
}

TEST_CASE("matern embeddings have no closed form and fall back to quadrature") {
    const KernelSpec c = KernelSpec::matern(2.5, 0.5);
    const BaseMeasure base = BaseMeasure::uniform(1);
    Matrix U(3, 1);
    U << 0.05, 0.5, 0.9;
    EmbeddingOptions closed;
    closed.method = EmbeddingOptions::Method::ClosedForm;
    CHECK_THROWS_AS(embed_points(c, base, U, closed), UnsupportedEmbeddingError);
    const Vector z = embed_points(c, base, U);
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(z(i) == doctest::Approx(trapezoid_uniform(c, U(i, 0))).epsilon(1e-8));
    }
    EmbeddingOptions mc;
    mc.method = EmbeddingOptions::Method::MonteCarlo;
    mc.mc_samples = 400000;
    const Vector zm = embed_points(c, base, U, mc);
    CHECK((zm - z).cwiseAbs().maxCoeff() < 4.0 * 0.5 / std::sqrt(400000.0));
}

TEST_CASE("embedding inputs are validated") {
    const KernelSpec c = KernelSpec::squared_exponential(1.0);
    Vector u(2);
    u << 0.1, 0.2;
    CHECK_THROWS_AS(embed_se_gaussian(c, u, BaseMeasure::standard_normal(3)), ArgumentError);
    CHECK_THROWS_AS(BaseMeasure::gaussian(Vector::Zero(2), -Vector::Ones(2)), ArgumentError);
}
