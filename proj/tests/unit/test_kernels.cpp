#include "owmmd/kernels.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <cmath>

using namespace owmmd;

TEST_CASE("squared exponential and matern values") {
    Vector x(2), y(2);
    x << 0.0, 0.0;
    y << 0.3, 0.4;  // distance 0.5
    const double r = 0.5 / 0.7;
    CHECK(kernel_eval(KernelSpec::squared_exponential(0.7, 2.0), x, y) ==
          doctest::Approx(2.0 * std::exp(-0.5 * r * r)).epsilon(1e-15));
    CHECK(kernel_eval(KernelSpec::matern(0.5, 0.7), x, y) == doctest::Approx(std::exp(-r)).epsilon(1e-15));
    CHECK(kernel_eval(KernelSpec::matern(1.5, 0.7), x, y) ==
          doctest::Approx((1 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r)).epsilon(1e-15));
    CHECK(kernel_eval(KernelSpec::matern(2.5, 0.7), x, y) ==
          doctest::Approx((1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r)).epsilon(1e-15));
}

TEST_CASE("kernel specs reject invalid parameters") {
    CHECK_THROWS_AS(KernelSpec::squared_exponential(0.0).validate(), ArgumentError);
    CHECK_THROWS_AS(KernelSpec::squared_exponential(-1.0).validate(), ArgumentError);
    CHECK_THROWS_AS(KernelSpec::squared_exponential(1.0, 0.0).validate(), ArgumentError);
    CHECK_THROWS_AS(KernelSpec::matern(2.0, 1.0).validate(), ArgumentError);
    CHECK_NOTHROW(KernelSpec::matern(1.5, 1.0).validate());
}

TEST_CASE("gram matrices are symmetric positive semidefinite with amplitude on the diagonal") {
    Matrix X = Matrix::Random(60, 3);
    for (const KernelSpec& k : {KernelSpec::squared_exponential(0.8, 1.5), KernelSpec::matern(0.5, 0.4),
                                KernelSpec::matern(2.5, 1.2)}) {
        const Matrix K = gram(k, X);
        CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((K.diagonal().array() == k.amplitude).all());
        Eigen::SelfAdjointEigenSolver<Matrix> eig(K);
        CHECK(eig.eigenvalues().minCoeff() > -1e-10);
        const Matrix Kxy = gram(k, X, X);
        CHECK((K - Kxy).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("kernel inputs must be finite and shape compatible") {
    Matrix X = Matrix::Zero(3, 2);
    X(1, 1) = std::nan("");
    CHECK_THROWS_AS(gram(KernelSpec::squared_exponential(1.0), X), ArgumentError);
    CHECK_THROWS_AS(gram(KernelSpec::squared_exponential(1.0), Matrix::Zero(3, 2), Matrix::Zero(3, 1)), ArgumentError);
}

TEST_CASE("radial slope matches the derivative of the profile") {
    for (const KernelSpec& k : {KernelSpec::squared_exponential(1.0), KernelSpec::matern(1.5, 1.0),
                                KernelSpec::matern(2.5, 1.0)}) {
        for (double r : {0.1, 0.5, 1.3, 2.9}) {
            const double h = 1e-6;
            const double d = (detail::radial_profile(k, (r + h) * (r + h)) - detail::radial_profile(k, (r - h) * (r - h))) / (2 * h);
            CHECK(detail::radial_slope_over_r(k, r * r) * r == doctest::Approx(d).epsilon(1e-7));
        }
    }
}

TEST_CASE("median heuristic uses the median squared distance over two") {
    Matrix X(3, 1);
    X << 0.0, 1.0, 2.0;  // squared distances 1, 4, 1
    CHECK(median_heuristic(X) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    Matrix Y(4, 1);
    Y << 0.0, 1.0, 3.0, 6.0;  // 1, 9, 36, 4, 25, 9 -> median (9 + 9) / 2
    CHECK(median_heuristic(Y) == doctest::Approx(std::sqrt(4.5)).epsilon(1e-15));
    CHECK_THROWS_AS(median_heuristic(Matrix::Ones(5, 2)), DegenerateDataError);
    CHECK_THROWS_AS(median_heuristic(Matrix::Ones(1, 2)), ArgumentError);
}

TEST_CASE("median heuristic subsamples large inputs deterministically") {
    Matrix X = Matrix::Random(9000, 2);
    const double a = median_heuristic(X);
    const double b = median_heuristic(X);
    CHECK(a == b);
    CHECK(a == doctest::Approx(median_heuristic(X, 9000)).epsilon(0.05));
}
