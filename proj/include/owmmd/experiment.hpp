#pragma once

#include "owmmd/estimators.hpp"
#include "owmmd/inference.hpp"
#include "owmmd/simulators.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace owmmd {

/// Full experiment configuration after defaults, file and overrides are merged.
struct ExperimentConfig {
    std::string simulator = "gandk";
    std::optional<Vector> theta;  // data-generating parameter; simulator default when empty
    SimulatorOptions simulator_options;
    bool uniform_formulation = false;

    KernelChoice kernel_k;
    KernelChoice kernel_c;
    std::vector<EstimatorKind> estimators{EstimatorKind::VStat, EstimatorKind::OW};
    PointKind points = PointKind::IID;
    std::vector<Eigen::Index> m_grid{256};
    Eigen::Index n = 10000;
    int repeats = 10;
    std::uint64_t seed = 0;
    std::string output;
    int threads = 1;

    enum class Reference { Sample, Quadrature } reference = Reference::Sample;
    int quadrature_nodes = 200;

    EstimateOptions estimate;
    MdeConfig mde;
    GofConfig gof;
    AbcConfig abc;

    [[nodiscard]] SimulatorSpec make_sim() const;
    [[nodiscard]] Vector data_theta(const SimulatorSpec& sim) const;
};

/// Defaults, then the JSON file (if any), then key=value overrides with dotted
/// keys. Unknown keys and malformed values throw ConfigError naming the key.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::uint64_t seed);
ExperimentConfig parse_config_text(const std::string& json_text, const std::vector<std::string>& overrides,
                                   std::uint64_t seed);

/// Default configuration tree as pretty-printed JSON.
std::string default_config_json();

/// A CSV table with every cell already formatted.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] std::ptrdiff_t column(const std::string& name) const;  // -1 when absent
};

struct RunOutput {
    Table results;
    Table summary;
    int failures = 0;
    std::vector<std::string> warnings;
};

/// Floats at 17 significant digits.
std::string format_double(double v);

inline const std::vector<std::string> kBenchmarkHeader = {
    "run_id", "simulator", "estimator", "points", "m", "n", "seed", "mmd2", "wallclock_ms", "kernel_evals",
    "solve_dim", "status"};
inline const std::vector<std::string> kBenchmarkSummaryHeader = {
    "simulator", "estimator", "points", "m", "n", "repeats", "failures", "mean_mmd2", "sd_mmd2", "se_mmd2"};
inline const std::vector<std::string> kSlopeHeader = {
    "estimator", "slope", "ci_half_width", "points_used", "m_min", "m_max", "reference"};
inline const std::vector<std::string> kSlopePointsHeader = {
    "estimator", "m", "repeats", "mean_abs_mmd2", "mean_error"};
inline const std::vector<std::string> kGofSummaryHeader = {
    "estimator", "repeats", "valid", "rejections", "rejection_fraction"};
inline const std::vector<std::string> kAbcSummaryHeader = {
    "repeat", "estimator", "parameter", "accepted", "median", "q25", "q75", "iqr"};

/// One row per (m, repeat, estimator): MMD^2 between m simulations and n
/// observations drawn at the same theta.
RunOutput run_benchmark(const ExperimentConfig& cfg);

/// Log-log slope of sqrt(mean |MMD^2|) against m per estimator, with the per-m
/// means in `summary`. The reference is either a fresh sample of size n or, for
/// one-dimensional base spaces, the model itself by quadrature.
RunOutput run_slope(const ExperimentConfig& cfg);

RunOutput run_gof(const ExperimentConfig& cfg);
RunOutput run_abc(const ExperimentConfig& cfg);
RunOutput run_mde(const ExperimentConfig& cfg);

/// Ordinary least squares of log(error) on log(m) with a 95% t interval.
/// Nonpositive or non-finite errors are dropped and reported in `excluded`.
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double half_width = 0.0;
    int used = 0;
    std::vector<std::size_t> excluded;
};
SlopeFit fit_log_log_slope(const std::vector<double>& m, const std::vector<double>& error);

/// Two-sided 97.5% Student t quantile.
double t_quantile_975(int dof);

/// Exact MMD^2 between the weighted simulated sample and the model P_theta for
/// one-dimensional base spaces, integrating the model side with `nodes`
/// Gauss-Hermite (Gaussian base) or Simpson (uniform base) nodes.
double mmd2_to_model_quadrature(const KernelSpec& k, const SimulatorSpec& sim, const Vector& theta,
                                const Eigen::Ref<const Matrix>& Y, const Eigen::Ref<const Vector>& w, int nodes);

}  // namespace owmmd
