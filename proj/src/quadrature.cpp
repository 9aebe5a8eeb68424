#include "owmmd/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace owmmd {

QuadratureRule gauss_hermite(int nodes) {
    if (nodes < 1) {
        throw ArgumentError("gauss_hermite: need at least one node");
    }
    Matrix jacobi = Matrix::Zero(nodes, nodes);
    for (int k = 1; k < nodes; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(jacobi);
    QuadratureRule rule;
    rule.nodes = solver.eigenvalues();
    rule.weights = solver.eigenvectors().row(0).transpose().array().square();
    rule.weights /= rule.weights.sum();
    return rule;
}

QuadratureRule simpson_unit_interval(int nodes) {
    if (nodes < 3) {
        throw ArgumentError("simpson_unit_interval: need at least three nodes");
    }
    if (nodes % 2 == 0) {
        ++nodes;
    }
    const double h = 1.0 / (nodes - 1);
    QuadratureRule rule;
    rule.nodes = Vector::LinSpaced(nodes, 0.0, 1.0);
    rule.weights.resize(nodes);
    for (int i = 0; i < nodes; ++i) {
        const double factor = (i == 0 || i == nodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        rule.weights(i) = factor * h / 3.0;
    }
    return rule;
}

}  // namespace owmmd
