#pragma once

#include "owmmd/common.hpp"
#include "owmmd/embeddings.hpp"

#include <cstdint>
#include <string>

namespace owmmd {

enum class PointKind { IID, RQMC, Grid };

std::string to_string(PointKind kind);

/// m base points (rows) in s dimensions plus how they were produced.
struct PointSet {
    Matrix points;
    PointKind kind = PointKind::IID;
    std::uint64_t seed = 0;

    [[nodiscard]] Eigen::Index size() const noexcept { return points.rows(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return points.cols(); }
};

/// Largest dimension covered by the embedded direction-number table.
int sobol_max_dimension();

/// m iid draws from the base measure.
PointSet sample_iid(const BaseMeasure& base, Eigen::Index m, std::uint64_t seed);

/// First m points of the unscrambled Sobol' sequence in s dimensions, in
/// generation order (Gray-code free, point i uses the binary digits of i), so
/// the first point is the origin.
Matrix sobol_points(Eigen::Index s, Eigen::Index m);

/// Sobol' points shifted by one uniform vector modulo 1 (Cranley-Patterson).
/// m must be a power of two; the shift is drawn from the seed.
PointSet sobol_rqmc(Eigen::Index s, Eigen::Index m, std::uint64_t seed);

/// Tensor grid of cell midpoints, k points per axis with k^s = m; s <= 3.
PointSet grid_points(Eigen::Index s, Eigen::Index m);

/// Clamp applied to unit-cube coordinates before an inverse-CDF transform.
inline constexpr double kUnitClamp = 1e-12;

/// Map unit-cube points to the base measure: identity for the uniform base,
/// mean_j + sd_j * inv_norm_cdf(u_j) for a Gaussian base. Coordinates are
/// clamped to [1e-12, 1 - 1e-12] before the inverse CDF.
PointSet to_base(const PointSet& unit_points, const BaseMeasure& base);

/// Convenience: the m base points a pipeline should use. IID draws straight
/// from the base; RQMC and Grid build unit-cube points and transform them.
PointSet generate_points(const BaseMeasure& base, PointKind kind, Eigen::Index m, std::uint64_t seed);

}  // namespace owmmd
