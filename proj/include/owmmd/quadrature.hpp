#pragma once

#include "owmmd/common.hpp"

namespace owmmd {

/// One-dimensional quadrature rule: sum_i weights(i) * f(nodes(i)).
struct QuadratureRule {
    Vector nodes;
    Vector weights;
};

/// Gauss-Hermite rule for expectations under N(0, 1) (probabilists'
/// convention, weights sum to one). Golub-Welsch: nodes are eigenvalues of the
/// symmetric Jacobi matrix with off-diagonal sqrt(k).
QuadratureRule gauss_hermite(int nodes);

/// Composite Simpson rule on [0, 1]. An even node count is bumped to the next
/// odd one so every panel is complete.
QuadratureRule simpson_unit_interval(int nodes);

}  // namespace owmmd
