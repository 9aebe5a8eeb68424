#include "owmmd/sampling.hpp"

#include "owmmd/random.hpp"
#include "owmmd/sobol_table.hpp"
#include "owmmd/special_functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace owmmd {

std::string to_string(PointKind kind) {
    switch (kind) {
        case PointKind::IID: return "iid";
        case PointKind::RQMC: return "rqmc";
        case PointKind::Grid: return "grid";
    }
    return "unknown";
}

int sobol_max_dimension() { return detail::kSobolMaxDimension; }

PointSet sample_iid(const BaseMeasure& base, Eigen::Index m, std::uint64_t seed) {
    base.validate();
    if (m < 1) {
        throw ArgumentError("sample_iid: need at least one point");
    }
    Rng rng(seed);
    PointSet out{Matrix(m, base.dim), PointKind::IID, seed};
    // Row-major fill so a prefix of rows does not depend on m.
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < base.dim; ++j) {
            out.points(i, j) = base.is_uniform() ? rng.uniform()
                                                 : base.mean(j) + std::sqrt(base.variance(j)) * rng.normal();
        }
    }
    return out;
}

namespace {

constexpr int kBits = 32;

// Direction integers V_k = m_k << (32 - k), k = 1..32, for one dimension.
std::array<std::uint32_t, kBits> direction_integers(int dim) {
    const auto& entry = detail::kSobolTable[static_cast<std::size_t>(dim)];
    std::array<std::uint64_t, kBits + 1> mk{};
    const int deg = entry.degree;
    if (dim == 0) {
        for (int k = 1; k <= kBits; ++k) mk[static_cast<std::size_t>(k)] = 1;
    } else {
        for (int k = 1; k <= deg; ++k) mk[static_cast<std::size_t>(k)] = entry.initial[static_cast<std::size_t>(k - 1)];
        for (int k = deg + 1; k <= kBits; ++k) {
            std::uint64_t value = mk[static_cast<std::size_t>(k - deg)] ^ (mk[static_cast<std::size_t>(k - deg)] << deg);
            for (int i = 1; i < deg; ++i) {
                const bool coefficient = (entry.polynomial >> (deg - i)) & 1U;
                if (coefficient) {
                    value ^= mk[static_cast<std::size_t>(k - i)] << i;
                }
            }
            mk[static_cast<std::size_t>(k)] = value;
        }
    }
    std::array<std::uint32_t, kBits> v{};
    for (int k = 1; k <= kBits; ++k) {
        v[static_cast<std::size_t>(k - 1)] = static_cast<std::uint32_t>(mk[static_cast<std::size_t>(k)] << (kBits - k));
    }
    return v;
}

bool is_power_of_two(Eigen::Index m) { return m > 0 && (m & (m - 1)) == 0; }

}  // namespace

Matrix sobol_points(Eigen::Index s, Eigen::Index m) {
    if (s < 1 || s > detail::kSobolMaxDimension) {
        throw ArgumentError("sobol_points: dimension outside the direction-number table (1.." +
                            std::to_string(detail::kSobolMaxDimension) + ")");
    }
    if (m < 1 || m > (Eigen::Index{1} << kBits)) {
        throw ArgumentError("sobol_points: point count out of range");
    }
    Matrix pts(m, s);
    for (Eigen::Index j = 0; j < s; ++j) {
        const auto v = direction_integers(static_cast<int>(j));
        for (Eigen::Index i = 0; i < m; ++i) {
            std::uint32_t x = 0;
            auto bits = static_cast<std::uint64_t>(i);
            for (int k = 0; bits != 0; ++k, bits >>= 1) {
                if (bits & 1U) x ^= v[static_cast<std::size_t>(k)];
            }
            pts(i, j) = static_cast<double>(x) * 0x1.0p-32;
        }
    }
    return pts;
}

PointSet sobol_rqmc(Eigen::Index s, Eigen::Index m, std::uint64_t seed) {
    if (!is_power_of_two(m)) {
        throw ArgumentError("sobol_rqmc: m must be a power of two");
    }
    PointSet out{sobol_points(s, m), PointKind::RQMC, seed};
    Rng rng(seed);
    for (Eigen::Index j = 0; j < s; ++j) {
        const double shift = rng.uniform();
        for (Eigen::Index i = 0; i < m; ++i) {
            double x = out.points(i, j) + shift;
            if (x >= 1.0) x -= 1.0;
            out.points(i, j) = x;
        }
    }
    return out;
}

PointSet grid_points(Eigen::Index s, Eigen::Index m) {
    if (s < 1 || s > 3) {
        throw ArgumentError("grid_points: grids are provided for s <= 3 only");
    }
    const auto per_axis = static_cast<Eigen::Index>(std::llround(std::pow(static_cast<double>(m), 1.0 / static_cast<double>(s))));
    Eigen::Index total = 1;
    for (Eigen::Index j = 0; j < s; ++j) total *= per_axis;
    if (per_axis < 1 || total != m) {
        throw ArgumentError("grid_points: m must be a perfect s-th power");
    }
    PointSet out{Matrix(m, s), PointKind::Grid, 0};
    for (Eigen::Index i = 0; i < m; ++i) {
        Eigen::Index rest = i;
        for (Eigen::Index j = 0; j < s; ++j) {
            out.points(i, j) = (static_cast<double>(rest % per_axis) + 0.5) / static_cast<double>(per_axis);
            rest /= per_axis;
        }
    }
    return out;
}

PointSet to_base(const PointSet& unit_points, const BaseMeasure& base) {
    base.validate();
    const Matrix& P = unit_points.points;
    if (P.cols() != base.dim) {
        throw ArgumentError("to_base: point dimension does not match base measure");
    }
    if (!P.allFinite() || (P.array() < 0.0).any() || (P.array() > 1.0).any()) {
        throw ArgumentError("to_base: points must lie in the unit cube");
    }
    if (base.is_uniform()) {
        return unit_points;
    }
    PointSet out = unit_points;
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        const double sd = std::sqrt(base.variance(j));
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            const double u = std::clamp(P(i, j), kUnitClamp, 1.0 - kUnitClamp);
            out.points(i, j) = base.mean(j) + sd * inv_norm_cdf(u);
        }
    }
    return out;
}

PointSet generate_points(const BaseMeasure& base, PointKind kind, Eigen::Index m, std::uint64_t seed) {
    switch (kind) {
        case PointKind::IID: return sample_iid(base, m, seed);
        case PointKind::RQMC: return to_base(sobol_rqmc(base.dim, m, seed), base);
        case PointKind::Grid: return to_base(grid_points(base.dim, m), base);
    }
    throw ArgumentError("generate_points: unknown point kind");
}

}  // namespace owmmd
