#include "owmmd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace owmmd {

void KernelSpec::validate() const {
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
        throw ArgumentError("kernel: lengthscale must be positive and finite");
    }
    if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
        throw ArgumentError("kernel: amplitude must be positive and finite");
    }
    if (family == KernelFamily::Matern && !detail::is_supported_order(order)) {
        throw ArgumentError("kernel: Matern order must be one of 0.5, 1.5, 2.5");
    }
}

std::string to_string(KernelFamily family) {
    return family == KernelFamily::SquaredExponential ? "se" : "matern";
}

double median_heuristic(const Eigen::Ref<const Matrix>& X, Eigen::Index max_points) {
    const Eigen::Index n = X.rows();
    if (n < 2) {
        throw ArgumentError("median_heuristic: need at least two points");
    }
    if (!X.allFinite()) {
        throw ArgumentError("median_heuristic: non-finite input");
    }
    std::vector<Eigen::Index> rows;
    if (n <= max_points) {
        rows.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    } else {
        rows.reserve(static_cast<std::size_t>(max_points));
        for (Eigen::Index i = 0; i < max_points; ++i) {
            rows.push_back(i * n / max_points);
        }
    }

    std::vector<double> sq;
    sq.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
            sq.push_back((X.row(rows[a]) - X.row(rows[b])).squaredNorm());
        }
    }

    const std::size_t mid = sq.size() / 2;
    std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
    double median = sq[mid];
    if (sq.size() % 2 == 0) {
        const double lower = *std::max_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    if (!(median > 0.0)) {
        throw DegenerateDataError("median_heuristic: median pairwise distance is zero");
    }
    return std::sqrt(median / 2.0);
}

}  // namespace owmmd
