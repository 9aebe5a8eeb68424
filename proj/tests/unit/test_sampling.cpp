#include "owmmd/sampling.hpp"
#include "sobol_fixture.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace owmmd;

namespace {

std::vector<std::vector<double>> sorted_rows(const Matrix& M) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(M.rows()));
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(M(i, j));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

TEST_CASE("sobol points match the scipy reference for every power-of-two prefix") {
    const Matrix P = sobol_points(1024, 32);
    for (int m : {1, 2, 4, 8, 16, 32}) {
        Matrix mine(m, 8), ref(m, 8);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < 8; ++j) {
                mine(i, j) = P(i, kSobolFixtureColumns[j]);
                ref(i, j) = kSobolFixture[i][j];
            }
        }
        CHECK(sorted_rows(mine) == sorted_rows(ref));
    }
}

TEST_CASE("one-dimensional sobol prefix is the van der Corput set") {
    const Matrix P = sobol_points(1, 4);
    std::vector<double> v{P(0, 0), P(1, 0), P(2, 0), P(3, 0)};
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<double>{0.0, 0.25, 0.5, 0.75});
}

TEST_CASE("sobol dimension and size limits") {
    CHECK(sobol_max_dimension() == 1024);
    CHECK_THROWS_AS(sobol_points(1025, 8), ArgumentError);
    CHECK_THROWS_AS(sobol_points(0, 8), ArgumentError);
    CHECK_THROWS_AS(sobol_rqmc(2, 100, 1), ArgumentError);
}

TEST_CASE("rqmc shift keeps points in the unit cube and preserves stratification") {
    const PointSet a = sobol_rqmc(3, 64, 11);
    const PointSet b = sobol_rqmc(3, 64, 11);
    const PointSet c = sobol_rqmc(3, 64, 12);
    CHECK(a.points == b.points);
    CHECK(a.points != c.points);
    CHECK((a.points.array() >= 0.0).all());
    CHECK((a.points.array() < 1.0).all());
    // Each coordinate still has exactly one point per interval of width 1/64.
    for (Eigen::Index j = 0; j < 3; ++j) {
        std::vector<int> bins(64, 0);
        for (Eigen::Index i = 0; i < 64; ++i) ++bins[static_cast<std::size_t>(a.points(i, j) * 64)];
        CHECK(std::all_of(bins.begin(), bins.end(), [](int k) { return k == 1; }));
    }
}

TEST_CASE("iid points are reproducible and prefix stable") {
    const BaseMeasure base = BaseMeasure::standard_normal(2);
    const PointSet a = sample_iid(base, 100, 5);
    const PointSet b = sample_iid(base, 40, 5);
    CHECK(a.points.topRows(40) == b.points);
    CHECK(sample_iid(base, 100, 5).points == a.points);
    CHECK_THROWS_AS(sample_iid(base, 0, 5), ArgumentError);
}

TEST_CASE("gaussian base maps unit points through the normal quantile") {
    Vector mean(1), var(1);
    mean << 2.0;
    var << 4.0;
    const PointSet g = generate_points(BaseMeasure::gaussian(mean, var), PointKind::Grid, 4, 0);
    // midpoints 1/8, 3/8, 5/8, 7/8 -> 2 + 2 * Phi^{-1}(p)
    CHECK(g.points(0, 0) == doctest::Approx(2.0 + 2.0 * -1.1503493803760079).epsilon(1e-12));
    CHECK(g.points(3, 0) == doctest::Approx(2.0 + 2.0 * 1.1503493803760079).epsilon(1e-12));
    CHECK_THROWS_AS(grid_points(2, 10), ArgumentError);
}
