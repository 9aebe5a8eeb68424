#pragma once

#include "owmmd/common.hpp"
#include "owmmd/kernels.hpp"

#include <cstdint>
#include <string>

namespace owmmd {

enum class BaseKind { UniformUnitCube, GaussianDiag };

/// Distribution of the base variables u fed to a generator: either the
/// uniform measure on [0, 1]^s or a Gaussian with diagonal covariance.
struct BaseMeasure {
    BaseKind kind = BaseKind::UniformUnitCube;
    Vector mean;      // GaussianDiag only
    Vector variance;  // GaussianDiag only
    Eigen::Index dim = 1;

    static BaseMeasure uniform(Eigen::Index s);
    static BaseMeasure gaussian(Vector mean, Vector variance);
    /// N(0, I_s).
    static BaseMeasure standard_normal(Eigen::Index s);

    [[nodiscard]] bool is_uniform() const noexcept { return kind == BaseKind::UniformUnitCube; }
    [[nodiscard]] bool is_gaussian() const noexcept { return kind == BaseKind::GaussianDiag; }

    void validate() const;
};

std::string to_string(BaseKind kind);

/// z(u) = int c(u, v) dv over [0, 1]^s for SE c:
///   amplitude * prod_j sqrt(2 pi) l [Phi((1 - u_j) / l) - Phi(-u_j / l)].
double embed_se_uniform(const KernelSpec& c, const Eigen::Ref<const Vector>& u);

/// z(u) = int c(u, v) N(v; mean, diag(variance)) dv for SE c:
///   amplitude * prod_j sqrt(l^2 / (l^2 + var_j)) exp(-(u_j - mean_j)^2 / (2 (l^2 + var_j))).
double embed_se_gaussian(const KernelSpec& c, const Eigen::Ref<const Vector>& u, const BaseMeasure& base);

/// Monte Carlo estimate (1/N) sum_i c(u, v_i), v_i iid from base. Works for
/// any kernel; the generator is owned by the call and seeded explicitly.
double embed_mc_oracle(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Vector>& u,
                       std::int64_t samples, std::uint64_t seed);

/// Tensor-product quadrature estimate of z(u) with `nodes` points per axis
/// (Simpson on [0, 1] or Gauss-Hermite). Limited to nodes^s <= 4e6.
double embed_quadrature(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Vector>& u,
                        int nodes);

struct DoubleEmbedMethod {
    enum class Kind { ClosedForm, Quadrature } kind = Kind::ClosedForm;
    int nodes = 0;

    static DoubleEmbedMethod closed_form() { return {Kind::ClosedForm, 0}; }
    static DoubleEmbedMethod quadrature(int n) { return {Kind::Quadrature, n}; }
};

/// int int c(u, v) dU(u) dU(v). Closed forms exist for SE only:
///   GaussianDiag: amplitude * prod_j sqrt(l^2 / (l^2 + 2 var_j)),
///   uniform: amplitude * [2 l sqrt(2 pi) (Phi(1/l) - 1/2) - 2 l^2 (1 - e^{-1/2l^2})]^s.
/// Quadrature factorizes
/// across axes for SE; Matern falls back to a full tensor grid, which must
/// stay below 1e8 node pairs.
double double_embed(const KernelSpec& c, const BaseMeasure& base, DoubleEmbedMethod method);

/// How embeddings are obtained inside the weight pipeline.
struct EmbeddingOptions {
    enum class Method { Auto, ClosedForm, Quadrature, MonteCarlo } method = Method::Auto;
    int uniform_nodes = 2000;
    int hermite_nodes = 200;
    std::int64_t mc_samples = 100000;
    std::uint64_t mc_seed = 0x5eed;
};

/// Embedding z(u_i) for every row of U. Auto picks the closed form for SE,
/// tensor quadrature for Matern when s <= 2 (200 nodes per axis for s = 2),
/// and Monte Carlo beyond.
Vector embed_points(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Matrix>& U,
                    const EmbeddingOptions& options = {});

/// Double integral matching embed_points' method choice: closed form for SE,
/// quadrature otherwise.
double double_embed_auto(const KernelSpec& c, const BaseMeasure& base, const EmbeddingOptions& options = {});

}  // namespace owmmd
