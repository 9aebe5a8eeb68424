#pragma once

#include "owmmd/common.hpp"
#include "owmmd/embeddings.hpp"

#include <functional>
#include <string>
#include <vector>

namespace owmmd {

/// Batched generator: row i of the result is G_theta(U.row(i)).
using BatchGenerator = std::function<Matrix(const Vector& theta, const Eigen::Ref<const Matrix>& U)>;

/// A simulator as a pair (generator, base measure). The generator must be a
/// pure map of (theta, u); anything that honours this contract (including an
/// adapter around an external program) can be plugged in.
struct SimulatorSpec {
    std::string name;
    Eigen::Index s = 1;  // base dimension
    Eigen::Index d = 1;  // data dimension
    BaseMeasure base;
    Eigen::Index theta_dim = 0;
    Vector theta_default;
    BatchGenerator generator;
    /// Throws ArgumentError for parameters outside the model's domain.
    std::function<void(const Vector&)> check_theta;

    /// Apply the generator to every row of U (U must have s columns).
    [[nodiscard]] Matrix simulate(const Vector& theta, const Eigen::Ref<const Matrix>& U) const;
    [[nodiscard]] Vector generate(const Vector& theta, const Eigen::Ref<const Vector>& u) const;
};

// ---- Generators ------------------------------------------------------------

/// g-and-k quantile map. theta = (A, B, g, k) for the univariate model
/// (u a scalar, z = u) or (A, B, g, k, rho) for the multivariate model, where
/// z = Sigma^{1/2} u with Sigma tridiagonal Toeplitz (unit diagonal, rho off
/// the diagonal) and Sigma^{1/2} its symmetric square root:
///   x = A + B [1 + 0.8 (1 - e^{-g z}) / (1 + e^{-g z})] (1 + z^2)^k z.
Vector gandk_generate(const Vector& theta, const Eigen::Ref<const Vector>& u);
Matrix gandk_generate_batch(const Vector& theta, const Eigen::Ref<const Matrix>& U);

/// Symmetric square root of the tridiagonal Toeplitz correlation matrix.
/// Throws ArgumentError when the matrix is not positive semi-definite.
Matrix gandk_correlation_sqrt(double rho, Eigen::Index d);

/// Two moons: angle a = pi (u_1 - 1/2), radius r = 0.1 + 0.01 Phi^{-1}(u_2),
/// p = (r cos a + 0.25, r sin a), x = p + (-|t1 + t2| / sqrt 2, (t2 - t1) / sqrt 2).
Vector two_moons_generate(const Vector& theta, const Eigen::Ref<const Vector>& u);

/// Bivariate beta from five Gamma(theta_i, 1) variables v_i = F^{-1}(u_i):
///   x1 = (v1 + v3) / (v1 + v3 + v4 + v5), x2 = (v2 + v4) / (v2 + v4 + v3 + v5).
Vector bivariate_beta_generate(const Vector& theta, const Eigen::Ref<const Vector>& u);

/// MA(2) series of length 10 from 12 innovations:
///   x_t = u_{t+2} + theta_1 u_{t+1} + theta_2 u_t.
Vector ma2_generate(const Vector& theta, const Eigen::Ref<const Vector>& u);

/// M/G/1 queue: five customers, service times theta_1 + (theta_2 - theta_1) u_i,
/// inter-arrival times -log(1 - u_{5+i}) / theta_3, Lindley recursion for the
/// departures. Returns the five inter-departure times.
Vector mg1_generate(const Vector& theta, const Eigen::Ref<const Vector>& u);

/// Integration constants for the stochastic Lotka-Volterra model.
struct LotkaVolterraConstants {
    double sigma_prey = 0.1;
    double sigma_predator = 0.1;
    double dt = 0.05;
    int steps = 300;
    double prey0 = 100.0;
    double predator0 = 100.0;
};

/// Euler-Maruyama for
///   dX = (t1 X - t2 X Y) dt + sx X dW1,   dY = (t2 X Y - t3 Y) dt + sy Y dW2,
/// consuming two standard normals per step (u has 2 * steps entries). Zero is
/// absorbing. Returns (X_T, Y_T); throws SimulationDivergedError on overflow.
Vector lotka_volterra_generate(const Vector& theta, const Eigen::Ref<const Vector>& u,
                               const LotkaVolterraConstants& constants = {});

// ---- Registry ---------------------------------------------------------------

SimulatorSpec make_gandk();
/// Multivariate g-and-k with s = d; base N(0, I_d).
SimulatorSpec make_gandk_multivariate(Eigen::Index d);
SimulatorSpec make_two_moons();
SimulatorSpec make_bivariate_beta();
SimulatorSpec make_ma2();
SimulatorSpec make_mg1();
SimulatorSpec make_lotka_volterra(const LotkaVolterraConstants& constants = {});

struct SimulatorOptions {
    Eigen::Index dim = 2;  // multivariate g-and-k only
    LotkaVolterraConstants lotka_volterra;
};

/// Look a simulator up by name: gandk, gandk_mv, two_moons, bivariate_beta,
/// ma2, mg1, lotka_volterra. Throws ArgumentError for unknown names.
SimulatorSpec make_simulator(const std::string& name, const SimulatorOptions& options = {});

std::vector<std::string> simulator_names();

/// Re-express a Gaussian-base simulator over the unit cube: the new generator
/// is G o (mean + sd * Phi^{-1}). Uniform-base simulators are returned as is.
SimulatorSpec uniform_formulation(const SimulatorSpec& sim);

}  // namespace owmmd
