#include "owmmd/simulators.hpp"

#include "owmmd/sampling.hpp"
#include "owmmd/special_functions.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace owmmd {

Matrix SimulatorSpec::simulate(const Vector& theta, const Eigen::Ref<const Matrix>& U) const {
    if (U.cols() != s) {
        throw ArgumentError(name + ": base points have " + std::to_string(U.cols()) + " columns, expected " +
                            std::to_string(s));
    }
    if (theta.size() != theta_dim) {
        throw ArgumentError(name + ": expected " + std::to_string(theta_dim) + " parameters");
    }
    if (check_theta) {
        check_theta(theta);
    }
    Matrix X = generator(theta, U);
    if (X.rows() != U.rows() || X.cols() != d) {
        throw ArgumentError(name + ": generator returned the wrong shape");
    }
    return X;
}

Vector SimulatorSpec::generate(const Vector& theta, const Eigen::Ref<const Vector>& u) const {
    const Matrix U = u.transpose();
    return simulate(theta, U).row(0).transpose();
}

namespace {

double clamp_unit(double u) { return std::clamp(u, kUnitClamp, 1.0 - kUnitClamp); }

void require_size(const Eigen::Ref<const Vector>& v, Eigen::Index n, const char* what) {
    if (v.size() != n) {
        throw ArgumentError(std::string(what) + ": expected length " + std::to_string(n));
    }
}

void check_gandk_theta(const Vector& theta) {
    if (theta.size() != 4 && theta.size() != 5) {
        throw ArgumentError("gandk: theta must have 4 or 5 entries");
    }
    if (!theta.allFinite()) {
        throw ArgumentError("gandk: non-finite parameter");
    }
    if (!(theta(1) > 0.0)) {
        throw ArgumentError("gandk: scale B must be positive");
    }
    if (!(theta(3) > -0.5)) {
        throw ArgumentError("gandk: kurtosis k must exceed -0.5");
    }
    if (theta.size() == 5 && !(std::abs(theta(4)) < 1.0)) {
        throw ArgumentError("gandk: correlation rho must satisfy |rho| < 1");
    }
}

// Quantile-type map applied elementwise to the correlated normals z.
template <typename Derived>
void gandk_transform(const Vector& theta, Eigen::ArrayBase<Derived>& z) {
    const double A = theta(0);
    const double B = theta(1);
    const double g = theta(2);
    const double k = theta(3);
    const auto e = (-g * z).exp();
    z = A + B * (1.0 + 0.8 * (1.0 - e) / (1.0 + e)) * (1.0 + z.square()).pow(k) * z;
}

}  // namespace

Matrix gandk_correlation_sqrt(double rho, Eigen::Index d) {
    if (d < 1) {
        throw ArgumentError("gandk: dimension must be positive");
    }
    Matrix sigma = Matrix::Identity(d, d);
    for (Eigen::Index i = 0; i + 1 < d; ++i) {
        sigma(i, i + 1) = sigma(i + 1, i) = rho;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sigma);
    const Vector eig = solver.eigenvalues();
    if (eig.minCoeff() < -1e-12) {
        throw ArgumentError("gandk: correlation matrix is not positive semi-definite for rho = " +
                            std::to_string(rho) + ", d = " + std::to_string(d));
    }
    const Vector root = eig.cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose();
}

Matrix gandk_generate_batch(const Vector& theta, const Eigen::Ref<const Matrix>& U) {
    check_gandk_theta(theta);
    Matrix Z;
    if (theta.size() == 4) {
        if (U.cols() != 1) {
            throw ArgumentError("gandk: univariate model takes scalar base points");
        }
        Z = U;
    } else {
        Z = U * gandk_correlation_sqrt(theta(4), U.cols());  // symmetric root, row form
    }
    auto z = Z.array();
    gandk_transform(theta, z);
    return Z;
}

Vector gandk_generate(const Vector& theta, const Eigen::Ref<const Vector>& u) {
    const Matrix U = u.transpose();
    return gandk_generate_batch(theta, U).row(0).transpose();
}

Vector two_moons_generate(const Vector& theta, const Eigen::Ref<const Vector>& u) {
    require_size(theta, 2, "two_moons theta");
    require_size(u, 2, "two_moons u");
    const double a = std::numbers::pi * (u(0) - 0.5);
    const double r = 0.1 + 0.01 * inv_norm_cdf(clamp_unit(u(1)));
    Vector x(2);
    x(0) = r * std::cos(a) + 0.25 - std::abs(theta(0) + theta(1)) / std::numbers::sqrt2;
    x(1) = r * std::sin(a) + (-theta(0) + theta(1)) / std::numbers::sqrt2;
    return x;
}

Vector bivariate_beta_generate(const Vector& theta, const Eigen::Ref<const Vector>& u) {
    require_size(theta, 5, "bivariate_beta theta");
    require_size(u, 5, "bivariate_beta u");
    if (!(theta.array() > 0.0).all()) {
        throw ArgumentError("bivariate_beta: shape parameters must be positive");
    }
    Eigen::Array<double, 5, 1> v;
    for (int i = 0; i < 5; ++i) {
        const double p = clamp_unit(u(i));
        v(i) = theta(i) == 1.0 ? -std::log1p(-p) : gamma_p_inv(theta(i), p);
    }
    Vector x(2);
    x(0) = (v(0) + v(2)) / (v(0) + v(2) + v(3) + v(4));
    x(1) = (v(1) + v(3)) / (v(1) + v(3) + v(2) + v(4));
    return x;
}

Vector ma2_generate(const Vector& theta, const Eigen::Ref<const Vector>& u) {
    require_size(theta, 2, "ma2 theta");
    require_size(u, 12, "ma2 u");
    Vector x(10);
    for (int t = 0; t < 10; ++t) {
        x(t) = u(t + 2) + theta(0) * u(t + 1) + theta(1) * u(t);
    }
    return x;
}

Vector mg1_generate(const Vector& theta, const Eigen::Ref<const Vector>& u) {
    require_size(theta, 3, "mg1 theta");
    require_size(u, 10, "mg1 u");
    if (!(theta(0) > 0.0 && theta(0) < theta(1)) || !(theta(2) > 0.0)) {
        throw ArgumentError("mg1: requires 0 < theta_1 < theta_2 and theta_3 > 0");
    }
    Vector out(5);
    double arrival = 0.0;
    double departure = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double service = theta(0) + (theta(1) - theta(0)) * u(i);
        arrival += -std::log1p(-std::min(u(5 + i), 1.0 - kUnitClamp)) / theta(2);
        const double next = std::max(arrival, departure) + service;
        out(i) = next - departure;
        departure = next;
    }
    return out;
}

Vector lotka_volterra_generate(const Vector& theta, const Eigen::Ref<const Vector>& u,
                               const LotkaVolterraConstants& c) {
    require_size(theta, 3, "lotka_volterra theta");
    require_size(u, 2 * c.steps, "lotka_volterra u");
    if (!(theta.array() > 0.0).all()) {
        throw ArgumentError("lotka_volterra: rates must be positive");
    }
    const double sqrt_dt = std::sqrt(c.dt);
    double prey = c.prey0;
    double predator = c.predator0;
    for (int k = 0; k < c.steps; ++k) {
        const double interaction = theta(1) * prey * predator;
        const double next_prey =
            prey + (theta(0) * prey - interaction) * c.dt + c.sigma_prey * prey * sqrt_dt * u(2 * k);
        const double next_predator = predator + (interaction - theta(2) * predator) * c.dt +
                                     c.sigma_predator * predator * sqrt_dt * u(2 * k + 1);
        if (!std::isfinite(next_prey) || !std::isfinite(next_predator)) {
            throw SimulationDivergedError("lotka_volterra: state became non-finite at step " + std::to_string(k));
        }
        prey = std::max(0.0, next_prey);
        predator = std::max(0.0, next_predator);
    }
    return Vector{{prey, predator}};
}

namespace {

using RowGenerator = std::function<Vector(const Vector&, const Eigen::Ref<const Vector>&)>;

BatchGenerator rowwise(RowGenerator row, Eigen::Index d) {
    return [row = std::move(row), d](const Vector& theta, const Eigen::Ref<const Matrix>& U) {
        Matrix X(U.rows(), d);
        Vector u(U.cols());
        for (Eigen::Index i = 0; i < U.rows(); ++i) {
            u = U.row(i).transpose();
            X.row(i) = row(theta, u).transpose();
        }
        return X;
    };
}

std::function<void(const Vector&)> positive_params(std::string name) {
    return [name = std::move(name)](const Vector& theta) {
        if (!(theta.array() > 0.0).all()) {
            throw ArgumentError(name + ": parameters must be positive");
        }
    };
}

}  // namespace

SimulatorSpec make_gandk() {
    SimulatorSpec sim;
    sim.name = "gandk";
    sim.s = sim.d = 1;
    sim.base = BaseMeasure::standard_normal(1);
    sim.theta_dim = 4;
    sim.theta_default = Vector{{3.0, 1.0, 0.1, 0.1}};
    sim.generator = [](const Vector& theta, const Eigen::Ref<const Matrix>& U) {
        return gandk_generate_batch(theta, U);
    };
    sim.check_theta = check_gandk_theta;
    return sim;
}

SimulatorSpec make_gandk_multivariate(Eigen::Index d) {
    if (d < 1) {
        throw ArgumentError("gandk_mv: dimension must be positive");
    }
    SimulatorSpec sim;
    sim.name = "gandk_mv";
    sim.s = sim.d = d;
    sim.base = BaseMeasure::standard_normal(d);
    sim.theta_dim = 5;
    sim.theta_default = Vector{{3.0, 1.0, 0.1, 0.1, 0.1}};
    sim.generator = [](const Vector& theta, const Eigen::Ref<const Matrix>& U) {
        return gandk_generate_batch(theta, U);
    };
    sim.check_theta = [d](const Vector& theta) {
        check_gandk_theta(theta);
        (void)gandk_correlation_sqrt(theta(4), d);
    };
    return sim;
}

SimulatorSpec make_two_moons() {
    SimulatorSpec sim;
    sim.name = "two_moons";
    sim.s = sim.d = 2;
    sim.base = BaseMeasure::uniform(2);
    sim.theta_dim = 2;
    sim.theta_default = Vector::Zero(2);
    sim.generator = rowwise(two_moons_generate, 2);
    return sim;
}

SimulatorSpec make_bivariate_beta() {
    SimulatorSpec sim;
    sim.name = "bivariate_beta";
    sim.s = 5;
    sim.d = 2;
    sim.base = BaseMeasure::uniform(5);
    sim.theta_dim = 5;
    sim.theta_default = Vector::Ones(5);
    sim.generator = rowwise(bivariate_beta_generate, 2);
    sim.check_theta = positive_params("bivariate_beta");
    return sim;
}

SimulatorSpec make_ma2() {
    SimulatorSpec sim;
    sim.name = "ma2";
    sim.s = 12;
    sim.d = 10;
    sim.base = BaseMeasure::standard_normal(12);
    sim.theta_dim = 2;
    sim.theta_default = Vector{{0.6, 0.2}};
    sim.generator = rowwise(ma2_generate, 10);
    return sim;
}

SimulatorSpec make_mg1() {
    SimulatorSpec sim;
    sim.name = "mg1";
    sim.s = 10;
    sim.d = 5;
    sim.base = BaseMeasure::uniform(10);
    sim.theta_dim = 3;
    sim.theta_default = Vector{{1.0, 5.0, 0.2}};
    sim.generator = rowwise(mg1_generate, 5);
    return sim;
}

SimulatorSpec make_lotka_volterra(const LotkaVolterraConstants& constants) {
    if (constants.steps < 1 || !(constants.dt > 0.0)) {
        throw ArgumentError("lotka_volterra: need positive step count and step size");
    }
    SimulatorSpec sim;
    sim.name = "lotka_volterra";
    sim.s = 2 * constants.steps;
    sim.d = 2;
    sim.base = BaseMeasure::standard_normal(sim.s);
    sim.theta_dim = 3;
    sim.theta_default = Vector{{5.0, 0.025, 6.0}};
    sim.generator = rowwise(
        [constants](const Vector& theta, const Eigen::Ref<const Vector>& u) {
            return lotka_volterra_generate(theta, u, constants);
        },
        2);
    sim.check_theta = positive_params("lotka_volterra");
    return sim;
}

std::vector<std::string> simulator_names() {
    return {"gandk", "gandk_mv", "two_moons", "bivariate_beta", "ma2", "mg1", "lotka_volterra"};
}

SimulatorSpec make_simulator(const std::string& name, const SimulatorOptions& options) {
    if (name == "gandk") return make_gandk();
    if (name == "gandk_mv") return make_gandk_multivariate(options.dim);
    if (name == "two_moons") return make_two_moons();
    if (name == "bivariate_beta") return make_bivariate_beta();
    if (name == "ma2") return make_ma2();
    if (name == "mg1") return make_mg1();
    if (name == "lotka_volterra") return make_lotka_volterra(options.lotka_volterra);
    throw ArgumentError("unknown simulator '" + name + "'");
}

SimulatorSpec uniform_formulation(const SimulatorSpec& sim) {
    if (sim.base.is_uniform()) {
        return sim;
    }
    SimulatorSpec out = sim;
    const BaseMeasure gaussian = sim.base;
    out.base = BaseMeasure::uniform(sim.s);
    out.generator = [gaussian, inner = sim.generator](const Vector& theta, const Eigen::Ref<const Matrix>& U) {
        const PointSet mapped = to_base(PointSet{U, PointKind::IID, 0}, gaussian);
        return inner(theta, mapped.points);
    };
    return out;
}

}  // namespace owmmd
