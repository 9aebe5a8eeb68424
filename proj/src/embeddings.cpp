#include "owmmd/embeddings.hpp"

#include "owmmd/quadrature.hpp"
#include "owmmd/random.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace owmmd {

BaseMeasure BaseMeasure::uniform(Eigen::Index s) {
    BaseMeasure b;
    b.kind = BaseKind::UniformUnitCube;
    b.dim = s;
    b.validate();
    return b;
}

BaseMeasure BaseMeasure::gaussian(Vector mean, Vector variance) {
    BaseMeasure b;
    b.kind = BaseKind::GaussianDiag;
    b.dim = mean.size();
    b.mean = std::move(mean);
    b.variance = std::move(variance);
    b.validate();
    return b;
}

BaseMeasure BaseMeasure::standard_normal(Eigen::Index s) {
    return gaussian(Vector::Zero(s), Vector::Ones(s));
}

void BaseMeasure::validate() const {
    if (dim < 1) {
        throw ArgumentError("base measure: dimension must be at least 1");
    }
    if (kind == BaseKind::GaussianDiag) {
        if (mean.size() != dim || variance.size() != dim) {
            throw ArgumentError("base measure: mean/variance length must equal the dimension");
        }
        if (!mean.allFinite() || !(variance.array() > 0.0).all() || !variance.allFinite()) {
            throw ArgumentError("base measure: variances must be positive and finite");
        }
    }
}

std::string to_string(BaseKind kind) {
    return kind == BaseKind::UniformUnitCube ? "uniform" : "gaussian";
}

namespace {

// P(a < Z < b) for Z ~ N(0, 1) without cancellation in either tail.
double normal_interval(double a, double b) {
    constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    if (a >= 0.0) {
        return 0.5 * (std::erfc(a * inv_sqrt2) - std::erfc(b * inv_sqrt2));
    }
    if (b <= 0.0) {
        return 0.5 * (std::erfc(-b * inv_sqrt2) - std::erfc(-a * inv_sqrt2));
    }
    return 0.5 * (std::erf(b * inv_sqrt2) - std::erf(a * inv_sqrt2));
}

void require_se(const KernelSpec& c, const char* what) {
    c.validate();
    if (!c.is_se()) {
        throw UnsupportedEmbeddingError(std::string(what) +
                                        ": closed form needs an SE kernel; use the quadrature or "
                                        "Monte Carlo embedding for Matern");
    }
}

// Per-axis SE double integral against the uniform measure on [0, 1].
double se_uniform_axis_double(double l, int nodes) {
    const QuadratureRule rule = simpson_unit_interval(nodes);
    const double inv_2l2 = 0.5 / (l * l);
    double total = 0.0;
    for (Eigen::Index a = 0; a < rule.nodes.size(); ++a) {
        const auto diff2 = (rule.nodes.array() - rule.nodes(a)).square();
        total += rule.weights(a) * (rule.weights.array() * (-diff2 * inv_2l2).exp()).sum();
    }
    return total;
}

// Nodes and weights of the 1-D rule for axis j of the base measure.
QuadratureRule axis_rule(const BaseMeasure& base, Eigen::Index j, int nodes) {
    if (base.is_uniform()) {
        return simpson_unit_interval(nodes);
    }
    QuadratureRule rule = gauss_hermite(nodes);
    rule.nodes = (base.mean(j) + std::sqrt(base.variance(j)) * rule.nodes.array()).matrix();
    return rule;
}

// Visit every point of the tensor grid built from per-axis rules.
template <typename Fn>
void for_each_tensor_node(const std::vector<QuadratureRule>& rules, Fn&& fn) {
    const std::size_t s = rules.size();
    std::vector<Eigen::Index> idx(s, 0);
    Vector point(static_cast<Eigen::Index>(s));
    while (true) {
        double weight = 1.0;
        for (std::size_t j = 0; j < s; ++j) {
            point(static_cast<Eigen::Index>(j)) = rules[j].nodes(idx[j]);
            weight *= rules[j].weights(idx[j]);
        }
        fn(point, weight);
        std::size_t j = 0;
        while (j < s) {
            if (++idx[j] < rules[j].nodes.size()) break;
            idx[j] = 0;
            ++j;
        }
        if (j == s) break;
    }
}

double tensor_size(const BaseMeasure& base, int nodes) {
    return std::pow(static_cast<double>(nodes + (base.is_uniform() && nodes % 2 == 0 ? 1 : 0)),
                    static_cast<double>(base.dim));
}

}  // namespace

double embed_se_uniform(const KernelSpec& c, const Eigen::Ref<const Vector>& u) {
    require_se(c, "embed_se_uniform");
    if (!u.allFinite() || (u.array() < 0.0).any() || (u.array() > 1.0).any()) {
        throw ArgumentError("embed_se_uniform: point must lie in [0, 1]^s");
    }
    const double l = c.lengthscale;
    const double scale = std::sqrt(2.0 * std::numbers::pi) * l;
    double z = c.amplitude;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        z *= scale * normal_interval(-u(j) / l, (1.0 - u(j)) / l);
    }
    return z;
}

double embed_se_gaussian(const KernelSpec& c, const Eigen::Ref<const Vector>& u, const BaseMeasure& base) {
    require_se(c, "embed_se_gaussian");
    if (!base.is_gaussian()) {
        throw ArgumentError("embed_se_gaussian: base measure must be Gaussian");
    }
    if (u.size() != base.dim || !u.allFinite()) {
        throw ArgumentError("embed_se_gaussian: point dimension mismatch or non-finite");
    }
    const double l2 = c.lengthscale * c.lengthscale;
    double z = c.amplitude;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double total = l2 + base.variance(j);
        const double d = u(j) - base.mean(j);
        z *= std::sqrt(l2 / total) * std::exp(-d * d / (2.0 * total));
    }
    return z;
}

double embed_mc_oracle(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Vector>& u,
                       std::int64_t samples, std::uint64_t seed) {
    c.validate();
    base.validate();
    if (samples < 1) {
        throw ArgumentError("embed_mc_oracle: need at least one sample");
    }
    if (u.size() != base.dim) {
        throw ArgumentError("embed_mc_oracle: point dimension mismatch");
    }
    Rng rng(seed);
    Vector v(base.dim);
    double sum = 0.0;
    for (std::int64_t i = 0; i < samples; ++i) {
        for (Eigen::Index j = 0; j < base.dim; ++j) {
            v(j) = base.is_uniform() ? rng.uniform()
                                     : base.mean(j) + std::sqrt(base.variance(j)) * rng.normal();
        }
        sum += kernel_eval(c, u, v);
    }
    return sum / static_cast<double>(samples);
}

double embed_quadrature(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Vector>& u,
                        int nodes) {
    c.validate();
    base.validate();
    if (u.size() != base.dim) {
        throw ArgumentError("embed_quadrature: point dimension mismatch");
    }
    if (c.is_se()) {
        // Separable: product of one-dimensional integrals.
        double z = c.amplitude;
        const double inv_2l2 = 0.5 / (c.lengthscale * c.lengthscale);
        for (Eigen::Index j = 0; j < base.dim; ++j) {
            const QuadratureRule rule = axis_rule(base, j, nodes);
            z *= (rule.weights.array() * (-(rule.nodes.array() - u(j)).square() * inv_2l2).exp()).sum();
        }
        return z;
    }
    if (tensor_size(base, nodes) > 4e6) {
        throw ArgumentError("embed_quadrature: tensor grid too large; lower the node count or use Monte Carlo");
    }
    std::vector<QuadratureRule> rules;
    for (Eigen::Index j = 0; j < base.dim; ++j) rules.push_back(axis_rule(base, j, nodes));
    double z = 0.0;
    for_each_tensor_node(rules, [&](const Vector& v, double w) { z += w * kernel_eval(c, u, v); });
    return z;
}

double double_embed(const KernelSpec& c, const BaseMeasure& base, DoubleEmbedMethod method) {
    c.validate();
    base.validate();
    if (method.kind == DoubleEmbedMethod::Kind::ClosedForm) {
        if (!c.is_se()) {
            throw UnsupportedEmbeddingError("double_embed: closed form only for the SE kernel; use quadrature");
        }
        const double l = c.lengthscale;
        const double l2 = l * l;
        double value = c.amplitude;
        for (Eigen::Index j = 0; j < base.dim; ++j) {
            if (base.is_uniform()) {
                // 2 int_0^1 (1 - t) exp(-t^2 / 2l^2) dt
                value *= 2.0 * (l * std::sqrt(2.0 * std::numbers::pi) * 0.5 * std::erf(1.0 / (l * std::numbers::sqrt2)) +
                                l2 * std::expm1(-0.5 / l2));
            } else {
                value *= std::sqrt(l2 / (l2 + 2.0 * base.variance(j)));
            }
        }
        return value;
    }

    const int nodes = method.nodes;
    if (c.is_se()) {
        double value = c.amplitude;
        if (base.is_uniform()) {
            value *= std::pow(se_uniform_axis_double(c.lengthscale, nodes), static_cast<double>(base.dim));
            return value;
        }
        const double inv_2l2 = 0.5 / (c.lengthscale * c.lengthscale);
        for (Eigen::Index j = 0; j < base.dim; ++j) {
            const QuadratureRule rule = axis_rule(base, j, nodes);
            double axis = 0.0;
            for (Eigen::Index a = 0; a < rule.nodes.size(); ++a) {
                axis += rule.weights(a) *
                        (rule.weights.array() * (-(rule.nodes.array() - rule.nodes(a)).square() * inv_2l2).exp())
                            .sum();
            }
            value *= axis;
        }
        return value;
    }

    const double grid = tensor_size(base, nodes);
    if (grid * grid > 1e8) {
        throw ArgumentError("double_embed: tensor grid too large for a Matern quadrature");
    }
    std::vector<QuadratureRule> rules;
    for (Eigen::Index j = 0; j < base.dim; ++j) rules.push_back(axis_rule(base, j, nodes));
    std::vector<Vector> points;
    std::vector<double> weights;
    for_each_tensor_node(rules, [&](const Vector& v, double w) {
        points.push_back(v);
        weights.push_back(w);
    });
    double value = 0.0;
    for (std::size_t a = 0; a < points.size(); ++a) {
        for (std::size_t b = 0; b < points.size(); ++b) {
            value += weights[a] * weights[b] * kernel_eval(c, points[a], points[b]);
        }
    }
    return value;
}

Vector embed_points(const KernelSpec& c, const BaseMeasure& base, const Eigen::Ref<const Matrix>& U,
                    const EmbeddingOptions& options) {
    c.validate();
    base.validate();
    if (U.cols() != base.dim) {
        throw ArgumentError("embed_points: point dimension does not match base measure");
    }
    using Method = EmbeddingOptions::Method;
    Method method = options.method;
    if (method == Method::Auto) {
        method = c.is_se() ? Method::ClosedForm : (base.dim <= 2 ? Method::Quadrature : Method::MonteCarlo);
    }
    Vector z(U.rows());
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        const Vector u = U.row(i).transpose();
        switch (method) {
            case Method::ClosedForm:
                z(i) = base.is_uniform() ? embed_se_uniform(c, u) : embed_se_gaussian(c, u, base);
                break;
            case Method::Quadrature: {
                int nodes = base.is_uniform() ? options.uniform_nodes : options.hermite_nodes;
                if (!c.is_se() && base.dim == 2) nodes = std::min(nodes, 200);
                z(i) = embed_quadrature(c, base, u, nodes);
                break;
            }
            case Method::MonteCarlo:
                z(i) = embed_mc_oracle(c, base, u, options.mc_samples, options.mc_seed);
                break;
            case Method::Auto:
                break;
        }
    }
    return z;
}

double double_embed_auto(const KernelSpec& c, const BaseMeasure& base, const EmbeddingOptions& options) {
    if (c.is_se()) {
        return double_embed(c, base, DoubleEmbedMethod::closed_form());
    }
    int nodes = base.is_uniform() ? options.uniform_nodes : options.hermite_nodes;
    if (!c.is_se()) {
        nodes = base.dim == 1 ? std::min(nodes, 2000) : std::min(nodes, 40);
    }
    return double_embed(c, base, DoubleEmbedMethod::quadrature(nodes));
}

}  // namespace owmmd
