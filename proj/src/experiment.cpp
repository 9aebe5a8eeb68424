#include "owmmd/experiment.hpp"

#include "owmmd/parallel.hpp"
#include "owmmd/quadrature.hpp"
#include "owmmd/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace owmmd {

namespace {

using json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Experiment ids mixed into every task seed.
enum class Experiment : std::uint64_t { Benchmark = 1, Slope = 2, Gof = 3, Abc = 4, Mde = 5 };

std::uint64_t task_seed(std::uint64_t master, Experiment exp, std::uint64_t repeat, Stage stage,
                        std::uint64_t extra = 0) {
    return derive_seed(master, {static_cast<std::uint64_t>(exp), repeat, tag(stage), extra});
}

json kernel_defaults() {
    return json{{"family", "se"}, {"lengthscale", "median"}, {"amplitude", 1.0}, {"order", 2.5}};
}

json defaults() {
    const LotkaVolterraConstants lv;
    json j;
    j["simulator"] = json{{"name", "gandk"},
                          {"theta", nullptr},
                          {"dim", 2},
                          {"formulation", "native"},
                          {"lotka_volterra",
                           json{{"sigma_prey", lv.sigma_prey},
                                {"sigma_predator", lv.sigma_predator},
                                {"dt", lv.dt},
                                {"steps", lv.steps},
                                {"prey0", lv.prey0},
                                {"predator0", lv.predator0}}}};
    j["kernel_k"] = kernel_defaults();
    j["kernel_c"] = kernel_defaults();
    j["estimator"] = json::array({"vstat", "ow"});
    j["points"] = "iid";
    j["m"] = json::array({256});
    j["n"] = 10000;
    j["repeats"] = 10;
    j["output"] = "";
    j["threads"] = 1;
    j["slope"] = json{{"reference", "sample"}, {"quadrature_nodes", 200}};
    j["embedding"] = json{{"method", "auto"}, {"uniform_nodes", 2000}, {"hermite_nodes", 200}, {"mc_samples", 100000}};
    j["jitter"] = json{{"initial_relative", 1e-8}, {"max_relative", 1e-2}, {"growth", 10.0}, {"try_exact_first", false}};
    const MdeConfig mde;
    j["mde"] = json{{"trials", mde.trials},     {"restarts", mde.restarts}, {"steps", mde.steps},
                    {"step", mde.step},         {"init_ranges", nullptr},   {"m", mde.m},
                    {"grad_eps", mde.grad_eps}, {"gradient", "pathwise"}};
    const GofConfig gof;
    j["gof"] = json{{"alpha", gof.alpha}, {"bootstrap", gof.bootstrap}, {"m", gof.m}, {"n", gof.n}};
    const AbcConfig abc;
    j["abc"] = json{{"prior_ranges", nullptr},
                    {"prior_draws", abc.prior_draws},
                    {"accept_fraction", abc.accept_fraction},
                    {"m", abc.m}};
    return j;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
}

std::string join_key(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void merge(json& base, const json& patch, const std::string& prefix) {
    if (!patch.is_object()) bad_value(prefix.empty() ? "<root>" : prefix, "expected an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = join_key(prefix, it.key());
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

void apply_override(json& tree, const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + text + "' is not of the form key=value");
    }
    const std::string key = text.substr(0, eq);
    const std::string raw = text.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // bare strings such as median or ow
    }
    json* slot = &tree;
    std::string walked;
    std::stringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.')) {
        walked = join_key(walked, part);
        if (!slot->is_object() || !slot->contains(part)) throw ConfigError("unknown config key '" + walked + "'");
        slot = &(*slot)[part];
    }
    if (slot->is_object()) {
        merge(*slot, value, key);
    } else {
        *slot = value;
    }
}

double get_number(const json& j, const std::string& key) {
    if (!j.is_number()) bad_value(key, "expected a number");
    return j.get<double>();
}

long long get_integer(const json& j, const std::string& key) {
    if (!j.is_number_integer() && !(j.is_number() && std::floor(j.get<double>()) == j.get<double>())) {
        bad_value(key, "expected an integer");
    }
    return j.is_number_integer() ? j.get<long long>() : static_cast<long long>(j.get<double>());
}

std::string get_string(const json& j, const std::string& key) {
    if (!j.is_string()) bad_value(key, "expected a string");
    return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& key) {
    if (!j.is_boolean()) bad_value(key, "expected true or false");
    return j.get<bool>();
}

KernelChoice parse_kernel(const json& j, const std::string& key) {
    KernelChoice out;
    const std::string family = get_string(j.at("family"), key + ".family");
    if (family == "se") {
        out.spec.family = KernelFamily::SquaredExponential;
    } else if (family == "matern") {
        out.spec.family = KernelFamily::Matern;
    } else {
        bad_value(key + ".family", "expected se or matern, got '" + family + "'");
    }
    out.spec.amplitude = get_number(j.at("amplitude"), key + ".amplitude");
    out.spec.order = get_number(j.at("order"), key + ".order");
    const json& l = j.at("lengthscale");
    if (l.is_string()) {
        if (l.get<std::string>() != "median") bad_value(key + ".lengthscale", "expected a number or \"median\"");
        out.median = true;
        out.spec.lengthscale = 1.0;
    } else {
        out.median = false;
        out.spec.lengthscale = get_number(l, key + ".lengthscale");
    }
    try {
        out.spec.validate();
    } catch (const ArgumentError& e) {
        bad_value(key, e.what());
    }
    return out;
}

std::vector<EstimatorKind> parse_estimators(const json& j, const std::string& key) {
    std::vector<EstimatorKind> out;
    auto one = [&](const json& v) {
        try {
            out.push_back(estimator_from_string(get_string(v, key)));
        } catch (const ArgumentError& e) {
            bad_value(key, e.what());
        }
    };
    if (j.is_array()) {
        for (const auto& v : j) one(v);
    } else {
        one(j);
    }
    if (out.empty()) bad_value(key, "at least one estimator required");
    return out;
}

std::vector<ParamRange> parse_ranges(const json& j, const std::string& key) {
    std::vector<ParamRange> out;
    if (j.is_null()) return out;
    if (!j.is_array()) bad_value(key, "expected a list of [lo, hi] pairs or fixed numbers");
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& r = j[i];
        const std::string k = key + "[" + std::to_string(i) + "]";
        if (r.is_number()) {
            const double v = r.get<double>();
            out.push_back({v, v});
        } else if (r.is_array() && r.size() == 2) {
            out.push_back({get_number(r[0], k), get_number(r[1], k)});
            if (!(out.back().lo <= out.back().hi)) bad_value(k, "lo must not exceed hi");
        } else {
            bad_value(k, "expected [lo, hi] or a number");
        }
    }
    return out;
}

std::vector<ParamRange> default_init_ranges(const std::string& simulator) {
    if (simulator == "gandk") return {{0.001, 5.0}, {0.001, 5.0}, {0.001, 1.0}, {0.001, 1.0}};
    if (simulator == "gandk_mv") return {{0.001, 5.0}, {0.001, 5.0}, {0.001, 1.0}, {0.1, 0.1}, {0.001, 1.0}};
    return {};
}

bool is_power_of_two(Eigen::Index m) { return m > 0 && (m & (m - 1)) == 0; }

ExperimentConfig from_tree(const json& j, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;

    const json& sim = j.at("simulator");
    cfg.simulator = get_string(sim.at("name"), "simulator.name");
    const auto names = simulator_names();
    if (std::find(names.begin(), names.end(), cfg.simulator) == names.end()) {
        bad_value("simulator.name", "unknown simulator '" + cfg.simulator + "'");
    }
    if (!sim.at("theta").is_null()) {
        const json& t = sim.at("theta");
        if (!t.is_array()) bad_value("simulator.theta", "expected a list of numbers");
        Vector theta(static_cast<Eigen::Index>(t.size()));
        for (std::size_t i = 0; i < t.size(); ++i) {
            theta(static_cast<Eigen::Index>(i)) = get_number(t[i], "simulator.theta");
        }
        cfg.theta = theta;
    }
    cfg.simulator_options.dim = get_integer(sim.at("dim"), "simulator.dim");
    if (cfg.simulator_options.dim < 1) bad_value("simulator.dim", "must be positive");
    const std::string formulation = get_string(sim.at("formulation"), "simulator.formulation");
    if (formulation != "native" && formulation != "uniform") {
        bad_value("simulator.formulation", "expected native or uniform");
    }
    cfg.uniform_formulation = formulation == "uniform";
    const json& lv = sim.at("lotka_volterra");
    auto& c = cfg.simulator_options.lotka_volterra;
    c.sigma_prey = get_number(lv.at("sigma_prey"), "simulator.lotka_volterra.sigma_prey");
    c.sigma_predator = get_number(lv.at("sigma_predator"), "simulator.lotka_volterra.sigma_predator");
    c.dt = get_number(lv.at("dt"), "simulator.lotka_volterra.dt");
    c.steps = static_cast<int>(get_integer(lv.at("steps"), "simulator.lotka_volterra.steps"));
    c.prey0 = get_number(lv.at("prey0"), "simulator.lotka_volterra.prey0");
    c.predator0 = get_number(lv.at("predator0"), "simulator.lotka_volterra.predator0");

    cfg.kernel_k = parse_kernel(j.at("kernel_k"), "kernel_k");
    cfg.kernel_c = parse_kernel(j.at("kernel_c"), "kernel_c");
    cfg.estimators = parse_estimators(j.at("estimator"), "estimator");

    const std::string points = get_string(j.at("points"), "points");
    if (points == "iid") {
        cfg.points = PointKind::IID;
    } else if (points == "rqmc") {
        cfg.points = PointKind::RQMC;
    } else if (points == "grid") {
        cfg.points = PointKind::Grid;
    } else {
        bad_value("points", "expected iid, rqmc or grid");
    }

    cfg.m_grid.clear();
    const json& m = j.at("m");
    if (m.is_array()) {
        for (const auto& v : m) cfg.m_grid.push_back(get_integer(v, "m"));
    } else {
        cfg.m_grid.push_back(get_integer(m, "m"));
    }
    if (cfg.m_grid.empty()) bad_value("m", "at least one value required");
    for (const auto v : cfg.m_grid) {
        if (v < 1) bad_value("m", "entries must be positive");
        if (cfg.points == PointKind::RQMC && !is_power_of_two(v)) {
            bad_value("m", "entries must be powers of 2 with rqmc points, got " + std::to_string(v));
        }
    }
    cfg.n = get_integer(j.at("n"), "n");
    if (cfg.n < 1) bad_value("n", "must be positive");
    cfg.repeats = static_cast<int>(get_integer(j.at("repeats"), "repeats"));
    if (cfg.repeats < 0) bad_value("repeats", "must be non-negative");
    cfg.output = get_string(j.at("output"), "output");
    cfg.threads = static_cast<int>(get_integer(j.at("threads"), "threads"));
    if (cfg.threads < 1) bad_value("threads", "must be positive");

    const std::string reference = get_string(j.at("slope").at("reference"), "slope.reference");
    if (reference == "sample") {
        cfg.reference = ExperimentConfig::Reference::Sample;
    } else if (reference == "quadrature") {
        cfg.reference = ExperimentConfig::Reference::Quadrature;
    } else {
        bad_value("slope.reference", "expected sample or quadrature");
    }
    cfg.quadrature_nodes = static_cast<int>(get_integer(j.at("slope").at("quadrature_nodes"), "slope.quadrature_nodes"));
    if (cfg.quadrature_nodes < 2) bad_value("slope.quadrature_nodes", "must be at least 2");

    const json& emb = j.at("embedding");
    const std::string method = get_string(emb.at("method"), "embedding.method");
    using Method = EmbeddingOptions::Method;
    if (method == "auto") {
        cfg.estimate.embedding.method = Method::Auto;
    } else if (method == "closed_form") {
        cfg.estimate.embedding.method = Method::ClosedForm;
    } else if (method == "quadrature") {
        cfg.estimate.embedding.method = Method::Quadrature;
    } else if (method == "monte_carlo") {
        cfg.estimate.embedding.method = Method::MonteCarlo;
    } else {
        bad_value("embedding.method", "expected auto, closed_form, quadrature or monte_carlo");
    }
    cfg.estimate.embedding.uniform_nodes = static_cast<int>(get_integer(emb.at("uniform_nodes"), "embedding.uniform_nodes"));
    cfg.estimate.embedding.hermite_nodes = static_cast<int>(get_integer(emb.at("hermite_nodes"), "embedding.hermite_nodes"));
    cfg.estimate.embedding.mc_samples = get_integer(emb.at("mc_samples"), "embedding.mc_samples");
    if (cfg.estimate.embedding.uniform_nodes < 2 || cfg.estimate.embedding.hermite_nodes < 2 ||
        cfg.estimate.embedding.mc_samples < 1) {
        bad_value("embedding", "node and sample counts must be positive");
    }

    const json& jit = j.at("jitter");
    cfg.estimate.jitter.initial_relative = get_number(jit.at("initial_relative"), "jitter.initial_relative");
    cfg.estimate.jitter.max_relative = get_number(jit.at("max_relative"), "jitter.max_relative");
    cfg.estimate.jitter.growth = get_number(jit.at("growth"), "jitter.growth");
    cfg.estimate.jitter.try_exact_first = get_bool(jit.at("try_exact_first"), "jitter.try_exact_first");
    if (!(cfg.estimate.jitter.initial_relative > 0.0) ||
        !(cfg.estimate.jitter.max_relative >= cfg.estimate.jitter.initial_relative) ||
        !(cfg.estimate.jitter.growth > 1.0)) {
        bad_value("jitter", "need 0 < initial_relative <= max_relative and growth > 1");
    }

    const json& mde = j.at("mde");
    cfg.mde.trials = static_cast<int>(get_integer(mde.at("trials"), "mde.trials"));
    cfg.mde.restarts = static_cast<int>(get_integer(mde.at("restarts"), "mde.restarts"));
    cfg.mde.steps = static_cast<int>(get_integer(mde.at("steps"), "mde.steps"));
    cfg.mde.step = get_number(mde.at("step"), "mde.step");
    cfg.mde.m = get_integer(mde.at("m"), "mde.m");
    cfg.mde.grad_eps = get_number(mde.at("grad_eps"), "mde.grad_eps");
    const std::string gradient = get_string(mde.at("gradient"), "mde.gradient");
    if (gradient == "pathwise") {
        cfg.mde.gradient = GradientMode::Pathwise;
    } else if (gradient == "loss_difference") {
        cfg.mde.gradient = GradientMode::LossDifference;
    } else {
        bad_value("mde.gradient", "expected pathwise or loss_difference");
    }
    cfg.mde.init_ranges = parse_ranges(mde.at("init_ranges"), "mde.init_ranges");
    if (cfg.mde.init_ranges.empty()) cfg.mde.init_ranges = default_init_ranges(cfg.simulator);
    if (cfg.mde.trials < 1 || cfg.mde.restarts < 1 || cfg.mde.restarts > cfg.mde.trials) {
        bad_value("mde", "need trials >= restarts >= 1");
    }
    if (cfg.mde.steps < 1) bad_value("mde.steps", "must be at least 1");
    if (!(cfg.mde.step > 0.0)) bad_value("mde.step", "must be positive");
    if (cfg.mde.m < 1) bad_value("mde.m", "must be positive");
    if (!(cfg.mde.grad_eps > 0.0)) bad_value("mde.grad_eps", "must be positive");

    const json& gof = j.at("gof");
    cfg.gof.alpha = get_number(gof.at("alpha"), "gof.alpha");
    cfg.gof.bootstrap = static_cast<int>(get_integer(gof.at("bootstrap"), "gof.bootstrap"));
    cfg.gof.m = get_integer(gof.at("m"), "gof.m");
    cfg.gof.n = get_integer(gof.at("n"), "gof.n");
    try {
        cfg.gof.validate();
    } catch (const ArgumentError& e) {
        bad_value("gof", e.what());
    }

    const json& abc = j.at("abc");
    cfg.abc.prior_ranges = parse_ranges(abc.at("prior_ranges"), "abc.prior_ranges");
    cfg.abc.prior_draws = static_cast<int>(get_integer(abc.at("prior_draws"), "abc.prior_draws"));
    cfg.abc.accept_fraction = get_number(abc.at("accept_fraction"), "abc.accept_fraction");
    cfg.abc.m = get_integer(abc.at("m"), "abc.m");
    cfg.abc.points = cfg.points;
    if (cfg.abc.prior_draws < 1) bad_value("abc.prior_draws", "must be positive");
    if (!(cfg.abc.accept_fraction > 0.0 && cfg.abc.accept_fraction <= 1.0)) {
        bad_value("abc.accept_fraction", "must be in (0, 1]");
    }
    if (cfg.abc.m < 1) bad_value("abc.m", "must be positive");

    // Catch simulator-level problems (bad theta length, invalid dim) at load time.
    try {
        const SimulatorSpec s = cfg.make_sim();
        (void)cfg.data_theta(s);
    } catch (const ArgumentError& e) {
        bad_value("simulator", e.what());
    }
    return cfg;
}

ExperimentConfig build(json tree, const std::vector<std::string>& overrides, std::uint64_t seed) {
    for (const auto& o : overrides) apply_override(tree, o);
    return from_tree(tree, seed);
}

// ---- Shared helpers -----------------------------------------------------------------

const char* failure_status(const std::exception& e) {
    if (dynamic_cast<const NumericalConditioningError*>(&e)) return "numerical_conditioning";
    if (dynamic_cast<const SimulationDivergedError*>(&e)) return "simulation_diverged";
    if (dynamic_cast<const DegenerateDataError*>(&e)) return "degenerate_data";
    if (dynamic_cast<const UnsupportedEmbeddingError*>(&e)) return "unsupported_embedding";
    if (dynamic_cast<const OptimizationFailedError*>(&e)) return "optimization_failed";
    if (dynamic_cast<const TestInvalidError*>(&e)) return "test_invalid";
    if (dynamic_cast<const ArgumentError*>(&e)) return "invalid_argument";
    return nullptr;
}

template <typename Fn>
std::string guarded(Fn&& fn) {
    try {
        fn();
        return "ok";
    } catch (const std::exception& e) {
        if (const char* s = failure_status(e)) return s;
        throw;
    }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

Matrix draw_observed(const SimulatorSpec& sim, const Vector& theta, Eigen::Index n, std::uint64_t seed) {
    return sim.simulate(theta, generate_points(sim.base, PointKind::IID, n, seed).points);
}

std::string fmt_int(long long v) { return std::to_string(v); }

double mean_of(const std::vector<double>& v) {
    return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return kNaN;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (const double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Linear interpolation between order statistics.
double quantile_linear(std::vector<double> v, double p) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<std::string> theta_columns(const std::string& prefix, Eigen::Index p) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < p; ++j) out.push_back(prefix + "_" + std::to_string(j + 1));
    return out;
}

void append_theta(std::vector<std::string>& row, const Vector& theta, Eigen::Index p) {
    for (Eigen::Index j = 0; j < p; ++j) row.push_back(j < theta.size() ? format_double(theta(j)) : format_double(kNaN));
}

// Model-side terms for the quadrature reference.
struct ModelReference {
    Matrix nodes_out;  // G(theta, u_q)
    Vector weights;
    double self_term = 0.0;
};

ModelReference make_reference(const KernelSpec& k, const SimulatorSpec& sim, const Vector& theta, int nodes) {
    if (sim.s != 1) {
        throw ArgumentError("quadrature reference needs a one-dimensional base space, got s = " + std::to_string(sim.s));
    }
    QuadratureRule rule;
    Vector u;
    if (sim.base.is_gaussian()) {
        rule = gauss_hermite(nodes);
        u = sim.base.mean(0) + std::sqrt(sim.base.variance(0)) * rule.nodes.array();
    } else {
        rule = simpson_unit_interval(nodes);
        u = rule.nodes.array().min(1.0 - kUnitClamp).max(kUnitClamp).matrix();
    }
    ModelReference ref;
    ref.nodes_out = sim.simulate(theta, Matrix(u));
    ref.weights = rule.weights;
    ref.self_term = ref.weights.dot(gram(k, ref.nodes_out) * ref.weights);
    return ref;
}

double ustat_to_model(const KernelSpec& k, const Matrix& Y, const ModelReference& ref) {
    const auto m = static_cast<double>(Y.rows());
    const double within = kernel_total(k, Y) - m * k.amplitude;
    const Vector z = gram(k, Y, ref.nodes_out) * ref.weights;
    return within / (m * (m - 1.0)) - 2.0 * z.mean() + ref.self_term;
}

double weighted_to_model(const KernelSpec& k, const Matrix& Y, const Vector& w, const ModelReference& ref) {
    const Vector z = gram(k, Y, ref.nodes_out) * ref.weights;
    return w.dot(gram(k, Y) * w) - 2.0 * w.dot(z) + ref.self_term;
}

struct Cell {
    double mmd2 = kNaN;
    double ms = 0.0;
    EstimateResult info;
    std::uint64_t seed = 0;
    std::string status = "ok";
};

// cells[(mi * repeats + r) * E + e]
std::vector<Cell> run_cells(const ExperimentConfig& cfg, Experiment exp, bool quadrature_reference) {
    const SimulatorSpec sim = cfg.make_sim();
    const Vector theta = cfg.data_theta(sim);
    const auto M = cfg.m_grid.size();
    const auto R = static_cast<std::size_t>(cfg.repeats);
    const auto E = cfg.estimators.size();
    std::vector<Cell> cells(M * R * E);
    auto at = [&](std::size_t mi, std::size_t r, std::size_t e) -> Cell& { return cells[(mi * R + r) * E + e]; };

    parallel_for(R, cfg.threads, [&](std::size_t r) {
        const auto rr = static_cast<std::uint64_t>(r);
        Matrix X;
        KernelSpec k;
        std::optional<Observed<double>> obs;
        std::optional<ModelReference> ref;
        const std::string setup = guarded([&] {
            X = draw_observed(sim, theta, cfg.n, task_seed(cfg.seed, exp, rr, Stage::Observed));
            k = cfg.kernel_k.resolve(X);
            if (quadrature_reference) {
                ref = make_reference(k, sim, theta, cfg.quadrature_nodes);
            } else {
                obs = make_observed(k, X);
            }
        });
        for (std::size_t mi = 0; mi < M; ++mi) {
            const Eigen::Index m = cfg.m_grid[mi];
            const std::uint64_t pseed = task_seed(cfg.seed, exp, rr, Stage::Points, mi);
            Matrix U;
            std::string point_status = setup;
            if (setup == "ok") {
                point_status = guarded([&] { U = generate_points(sim.base, cfg.points, m, pseed).points; });
            }
            for (std::size_t e = 0; e < E; ++e) {
                Cell& cell = at(mi, r, e);
                cell.seed = pseed;
                if (point_status != "ok") {
                    cell.status = point_status;
                    continue;
                }
                const auto start = std::chrono::steady_clock::now();
                const EstimatorKind kind = cfg.estimators[e];
                cell.status = guarded([&] {
                    if (!quadrature_reference) {
                        cell.info = estimate_on_points(kind, k, cfg.kernel_c, sim, theta, U, *obs, cfg.estimate);
                        cell.mmd2 = cell.info.mmd2;
                        return;
                    }
                    const Matrix Y = sim.simulate(theta, U);
                    const auto nq = static_cast<std::int64_t>(ref->weights.size());
                    cell.info.kernel_evals = static_cast<std::int64_t>(m) * m + static_cast<std::int64_t>(m) * nq;
                    if (kind == EstimatorKind::UStat) {
                        if (m < 2) throw ArgumentError("U-statistic needs m >= 2");
                        cell.mmd2 = ustat_to_model(k, Y, *ref);
                    } else if (kind == EstimatorKind::VStat) {
                        cell.mmd2 = weighted_to_model(k, Y, Vector::Constant(m, 1.0 / static_cast<double>(m)), *ref);
                    } else {
                        const KernelSpec c = m >= 2 ? cfg.kernel_c.resolve(U) : cfg.kernel_c.spec;
                        const OptimalWeights w = optimal_weights(c, U, sim.base, cfg.estimate.jitter, cfg.estimate.embedding);
                        cell.mmd2 = weighted_to_model(k, Y, w.weights, *ref);
                        cell.info.jitter = w.jitter;
                        cell.info.solve_dim = m;
                        cell.info.c_lengthscale = c.lengthscale;
                        cell.info.kernel_evals += static_cast<std::int64_t>(m) * m;
                    }
                    cell.info.mmd2 = cell.mmd2;
                });
                cell.ms = elapsed_ms(start);
                if (cell.status == "ok" && !std::isfinite(cell.mmd2)) cell.status = "non_finite";
            }
        }
    });
    return cells;
}

}  // namespace

// ---- Config -------------------------------------------------------------------------

SimulatorSpec ExperimentConfig::make_sim() const {
    SimulatorSpec sim = make_simulator(simulator, simulator_options);
    return uniform_formulation ? owmmd::uniform_formulation(sim) : sim;
}

Vector ExperimentConfig::data_theta(const SimulatorSpec& sim) const {
    const Vector t = theta ? *theta : sim.theta_default;
    if (t.size() != sim.theta_dim) {
        throw ArgumentError(sim.name + " expects " + std::to_string(sim.theta_dim) + " parameters, got " +
                            std::to_string(t.size()));
    }
    if (sim.check_theta) sim.check_theta(t);
    return t;
}

std::string default_config_json() { return defaults().dump(2); }

ExperimentConfig parse_config_text(const std::string& json_text, const std::vector<std::string>& overrides,
                                   std::uint64_t seed) {
    json tree = defaults();
    if (!json_text.empty()) {
        json file;
        try {
            file = json::parse(json_text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        merge(tree, file, "");
    }
    return build(std::move(tree), overrides, seed);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::uint64_t seed) {
    std::string text;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) text.clear();
    }
    return parse_config_text(text, overrides, seed);
}

// ---- Tables -------------------------------------------------------------------------

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string Table::to_csv() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os << ',';
            os << cells[i];
        }
        os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
}

std::ptrdiff_t Table::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : std::distance(header.begin(), it);
}

// ---- Slope fitting ------------------------------------------------------------------

double t_quantile_975(int dof) {
    static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                       2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                       2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) return std::numeric_limits<double>::infinity();
    if (dof <= 30) return table[dof - 1];
    if (dof <= 40) return 2.021;
    if (dof <= 60) return 2.000;
    if (dof <= 120) return 1.980;
    return 1.960;
}

SlopeFit fit_log_log_slope(const std::vector<double>& m, const std::vector<double>& error) {
    if (m.size() != error.size()) throw ArgumentError("fit_log_log_slope: size mismatch");
    SlopeFit fit;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!(error[i] > 0.0) || !std::isfinite(error[i]) || !(m[i] > 0.0)) {
            fit.excluded.push_back(i);
            continue;
        }
        x.push_back(std::log(m[i]));
        y.push_back(std::log(error[i]));
    }
    fit.used = static_cast<int>(x.size());
    if (fit.used < 2) {
        fit.slope = fit.intercept = fit.half_width = kNaN;
        return fit;
    }
    const double xm = mean_of(x), ym = mean_of(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    if (!(sxx > 0.0)) throw ArgumentError("fit_log_log_slope: m values must not all coincide");
    fit.slope = sxy / sxx;
    fit.intercept = ym - fit.slope * xm;
    if (fit.used == 2) {
        fit.half_width = std::numeric_limits<double>::infinity();
        return fit;
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        sse += r * r;
    }
    const int dof = fit.used - 2;
    fit.half_width = t_quantile_975(dof) * std::sqrt(sse / dof / sxx);
    return fit;
}

double mmd2_to_model_quadrature(const KernelSpec& k, const SimulatorSpec& sim, const Vector& theta,
                                const Eigen::Ref<const Matrix>& Y, const Eigen::Ref<const Vector>& w, int nodes) {
    if (Y.rows() != w.size()) throw ArgumentError("mmd2_to_model_quadrature: one weight per point required");
    const ModelReference ref = make_reference(k, sim, theta, nodes);
    return weighted_to_model(k, Matrix(Y), Vector(w), ref);
}

// ---- Runners ------------------------------------------------------------------------

RunOutput run_benchmark(const ExperimentConfig& cfg) {
    const std::vector<Cell> cells = run_cells(cfg, Experiment::Benchmark, false);
    const auto M = cfg.m_grid.size();
    const auto R = static_cast<std::size_t>(cfg.repeats);
    const auto E = cfg.estimators.size();
    const std::string points = to_string(cfg.points);

    RunOutput out;
    out.results.header = kBenchmarkHeader;
    out.summary.header = kBenchmarkSummaryHeader;
    long long run_id = 0;
    for (std::size_t mi = 0; mi < M; ++mi) {
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t e = 0; e < E; ++e) {
                const Cell& c = cells[(mi * R + r) * E + e];
                if (c.status != "ok") ++out.failures;
                out.results.rows.push_back({fmt_int(run_id++), cfg.simulator, to_string(cfg.estimators[e]), points,
                                            fmt_int(cfg.m_grid[mi]), fmt_int(cfg.n), std::to_string(c.seed),
                                            format_double(c.mmd2), format_double(c.ms), fmt_int(c.info.kernel_evals),
                                            fmt_int(c.info.solve_dim), c.status});
            }
        }
    }
    for (std::size_t mi = 0; mi < M; ++mi) {
        for (std::size_t e = 0; e < E; ++e) {
            std::vector<double> v;
            int failed = 0;
            for (std::size_t r = 0; r < R; ++r) {
                const Cell& c = cells[(mi * R + r) * E + e];
                if (c.status == "ok") {
                    v.push_back(c.mmd2);
                } else {
                    ++failed;
                }
            }
            const double sd = sd_of(v);
            out.summary.rows.push_back({cfg.simulator, to_string(cfg.estimators[e]), points, fmt_int(cfg.m_grid[mi]),
                                        fmt_int(cfg.n), fmt_int(cfg.repeats), fmt_int(failed), format_double(mean_of(v)),
                                        format_double(sd),
                                        format_double(sd / std::sqrt(static_cast<double>(v.size())))});
        }
    }
    return out;
}

RunOutput run_slope(const ExperimentConfig& cfg) {
    if (cfg.m_grid.size() < 4) throw ConfigError("config key 'm': slope needs at least 4 grid points");
    const auto [lo, hi] = std::minmax_element(cfg.m_grid.begin(), cfg.m_grid.end());
    if (*hi < 8 * *lo) throw ConfigError("config key 'm': slope grid must span at least a factor of 8");
    if (cfg.repeats < 1) throw ConfigError("config key 'repeats': slope needs at least one repeat");
    const bool quad = cfg.reference == ExperimentConfig::Reference::Quadrature;
    if (quad && cfg.make_sim().s != 1) {
        throw ConfigError("config key 'slope.reference': quadrature needs a one-dimensional base space");
    }
    const std::vector<Cell> cells = run_cells(cfg, Experiment::Slope, quad);
    const auto M = cfg.m_grid.size();
    const auto R = static_cast<std::size_t>(cfg.repeats);
    const auto E = cfg.estimators.size();

    RunOutput out;
    out.results.header = kSlopeHeader;
    out.summary.header = kSlopePointsHeader;
    for (const auto& c : cells) {
        if (c.status != "ok") ++out.failures;
    }
    for (std::size_t e = 0; e < E; ++e) {
        std::vector<double> ms, errs;
        for (std::size_t mi = 0; mi < M; ++mi) {
            std::vector<double> v;
            for (std::size_t r = 0; r < R; ++r) {
                const Cell& c = cells[(mi * R + r) * E + e];
                if (c.status == "ok") v.push_back(std::abs(c.mmd2));
            }
            const double mean_abs = mean_of(v);
            const double err = std::sqrt(std::max(0.0, mean_abs));
            ms.push_back(static_cast<double>(cfg.m_grid[mi]));
            errs.push_back(err);
            out.summary.rows.push_back({to_string(cfg.estimators[e]), fmt_int(cfg.m_grid[mi]), fmt_int(static_cast<long long>(v.size())),
                                        format_double(mean_abs), format_double(err)});
        }
        const SlopeFit fit = fit_log_log_slope(ms, errs);
        for (const auto i : fit.excluded) {
            out.warnings.push_back("slope: excluded m = " + std::to_string(cfg.m_grid[i]) + " for " +
                                   to_string(cfg.estimators[e]) + " (nonpositive mean error)");
        }
        out.results.rows.push_back({to_string(cfg.estimators[e]), format_double(fit.slope), format_double(fit.half_width),
                                    fmt_int(fit.used), fmt_int(*lo), fmt_int(*hi), quad ? "quadrature" : "sample"});
    }
    return out;
}

RunOutput run_gof(const ExperimentConfig& cfg) {
    for (const auto e : cfg.estimators) {
        if (e == EstimatorKind::UStat) throw ConfigError("config key 'estimator': gof supports vstat and ow only");
    }
    const SimulatorSpec sim = cfg.make_sim();
    const Vector theta = cfg.data_theta(sim);
    if (cfg.mde.init_ranges.empty()) throw ConfigError("config key 'mde.init_ranges': required for " + cfg.simulator);
    try {
        cfg.mde.validate(sim.theta_dim);
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string("config key 'mde': ") + e.what());
    }
    const auto R = static_cast<std::size_t>(cfg.repeats);
    const auto E = cfg.estimators.size();
    const Eigen::Index p = sim.theta_dim;

    struct Slot {
        GofResult result;
        std::uint64_t seed = 0;
        double ms = 0.0;
        std::string status = "ok";
    };
    std::vector<Slot> slots(R * E);
    parallel_for(R * E, cfg.threads, [&](std::size_t idx) {
        const std::size_t r = idx / E, e = idx % E;
        const auto kind = cfg.estimators[e];
        Slot& slot = slots[idx];
        slot.seed = task_seed(cfg.seed, Experiment::Gof, r, Stage::GofFit, static_cast<std::uint64_t>(kind));
        const auto start = std::chrono::steady_clock::now();
        slot.status = guarded([&] {
            const Matrix X = draw_observed(sim, theta, cfg.gof.n, task_seed(cfg.seed, Experiment::Gof, r, Stage::Observed));
            const KernelSpec k = cfg.kernel_k.resolve(X);
            GofConfig g = cfg.gof;
            g.estimator = kind;
            slot.result = gof_test(sim, k, cfg.kernel_c, X, g, cfg.mde, slot.seed, 1, cfg.estimate);
        });
        slot.ms = elapsed_ms(start);
    });

    RunOutput out;
    out.results.header = {"repeat", "estimator", "seed", "reject", "statistic", "critical_value", "failures"};
    for (const auto& c : theta_columns("theta_hat", p)) out.results.header.push_back(c);
    out.results.header.push_back("wallclock_ms");
    out.results.header.push_back("status");
    out.summary.header = kGofSummaryHeader;

    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t e = 0; e < E; ++e) {
            const Slot& s = slots[r * E + e];
            const bool ok = s.status == "ok";
            if (!ok) ++out.failures;
            std::vector<std::string> row{fmt_int(static_cast<long long>(r)), to_string(cfg.estimators[e]), std::to_string(s.seed),
                                         ok ? (s.result.reject ? "1" : "0") : "nan",
                                         format_double(ok ? s.result.statistic : kNaN),
                                         format_double(ok ? s.result.critical_value : kNaN),
                                         fmt_int(s.result.failures)};
            append_theta(row, ok ? s.result.theta_hat : Vector(), p);
            row.push_back(format_double(s.ms));
            row.push_back(s.status);
            out.results.rows.push_back(std::move(row));
        }
    }
    for (std::size_t e = 0; e < E; ++e) {
        int valid = 0, rejections = 0;
        for (std::size_t r = 0; r < R; ++r) {
            const Slot& s = slots[r * E + e];
            if (s.status != "ok") continue;
            ++valid;
            rejections += s.result.reject ? 1 : 0;
        }
        out.summary.rows.push_back({to_string(cfg.estimators[e]), fmt_int(cfg.repeats), fmt_int(valid), fmt_int(rejections),
                                    format_double(valid > 0 ? static_cast<double>(rejections) / valid : kNaN)});
    }
    return out;
}

RunOutput run_abc(const ExperimentConfig& cfg) {
    const SimulatorSpec sim = cfg.make_sim();
    const Vector theta = cfg.data_theta(sim);
    if (cfg.abc.prior_ranges.empty()) throw ConfigError("config key 'abc.prior_ranges': required");
    try {
        cfg.abc.validate(sim.theta_dim);
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string("config key 'abc': ") + e.what());
    }
    if (cfg.repeats < 1) throw ConfigError("config key 'repeats': abc needs at least one repeat");
    const Eigen::Index p = sim.theta_dim;
    RunOutput out;
    out.results.header = {"repeat", "estimator", "rank", "distance"};
    for (const auto& c : theta_columns("theta", p)) out.results.header.push_back(c);
    out.summary.header = kAbcSummaryHeader;

    for (int r = 0; r < cfg.repeats; ++r) {
        const auto rr = static_cast<std::uint64_t>(r);
        const Matrix X = draw_observed(sim, theta, cfg.n, task_seed(cfg.seed, Experiment::Abc, rr, Stage::Observed));
        const KernelSpec k = cfg.kernel_k.resolve(X);
        const Observed<double> obs = make_observed(k, X);
        for (const auto kind : cfg.estimators) {
            const AbcResult res = abc_rejection(sim, k, cfg.kernel_c, kind, obs, cfg.abc,
                                                task_seed(cfg.seed, Experiment::Abc, rr, Stage::AbcPrior,
                                                          static_cast<std::uint64_t>(kind)),
                                                cfg.threads, cfg.estimate);
            for (std::size_t i = 0; i < res.accepted.size(); ++i) {
                if (!std::isfinite(res.distances[i])) ++out.failures;
                std::vector<std::string> row{fmt_int(r), to_string(kind), fmt_int(static_cast<long long>(i + 1)),
                                             format_double(res.distances[i])};
                append_theta(row, res.accepted[i], p);
                out.results.rows.push_back(std::move(row));
            }
            for (Eigen::Index j = 0; j < p; ++j) {
                std::vector<double> v;
                for (const auto& t : res.accepted) v.push_back(t(j));
                const double q25 = quantile_linear(v, 0.25), q75 = quantile_linear(v, 0.75);
                out.summary.rows.push_back({fmt_int(r), to_string(kind), "theta_" + std::to_string(j + 1),
                                            fmt_int(static_cast<long long>(v.size())), format_double(quantile_linear(v, 0.5)),
                                            format_double(q25), format_double(q75), format_double(q75 - q25)});
            }
        }
    }
    return out;
}

RunOutput run_mde(const ExperimentConfig& cfg) {
    const SimulatorSpec sim = cfg.make_sim();
    const Vector theta = cfg.data_theta(sim);
    if (cfg.mde.init_ranges.empty()) throw ConfigError("config key 'mde.init_ranges': required for " + cfg.simulator);
    try {
        cfg.mde.validate(sim.theta_dim);
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string("config key 'mde': ") + e.what());
    }
    if (cfg.repeats < 1) throw ConfigError("config key 'repeats': mde needs at least one repeat");
    const auto R = static_cast<std::size_t>(cfg.repeats);
    const auto E = cfg.estimators.size();
    const Eigen::Index p = sim.theta_dim;

    struct Slot {
        MdeResult result;
        std::uint64_t seed = 0;
        double ms = 0.0;
        std::string status = "ok";
    };
    std::vector<Slot> slots(R * E);
    parallel_for(R * E, cfg.threads, [&](std::size_t idx) {
        const std::size_t r = idx / E, e = idx % E;
        const auto kind = cfg.estimators[e];
        Slot& slot = slots[idx];
        slot.seed = task_seed(cfg.seed, Experiment::Mde, r, Stage::MdeTrial, static_cast<std::uint64_t>(kind));
        const auto start = std::chrono::steady_clock::now();
        slot.status = guarded([&] {
            const Matrix X = draw_observed(sim, theta, cfg.n, task_seed(cfg.seed, Experiment::Mde, r, Stage::Observed));
            const KernelSpec k = cfg.kernel_k.resolve(X);
            const MmdObjective objective(sim, k, cfg.kernel_c, kind, make_observed(k, X), cfg.mde.m, cfg.estimate);
            slot.result = mde_fit(objective, cfg.mde, slot.seed);
        });
        slot.ms = elapsed_ms(start);
    });

    RunOutput out;
    out.results.header = {"repeat", "estimator", "seed", "loss"};
    for (const auto& c : theta_columns("theta", p)) out.results.header.push_back(c);
    for (const auto* c : {"diverged_restarts", "wallclock_ms", "status"}) out.results.header.push_back(c);
    out.summary.header = {"estimator", "parameter", "repeats", "mean", "sd"};
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t e = 0; e < E; ++e) {
            const Slot& s = slots[r * E + e];
            const bool ok = s.status == "ok";
            if (!ok) ++out.failures;
            std::vector<std::string> row{fmt_int(static_cast<long long>(r)), to_string(cfg.estimators[e]), std::to_string(s.seed),
                                         format_double(ok ? s.result.loss : kNaN)};
            append_theta(row, ok ? s.result.theta : Vector(), p);
            row.push_back(fmt_int(s.result.diverged_restarts));
            row.push_back(format_double(s.ms));
            row.push_back(s.status);
            out.results.rows.push_back(std::move(row));
        }
    }
    for (std::size_t e = 0; e < E; ++e) {
        for (Eigen::Index j = 0; j < p; ++j) {
            std::vector<double> v;
            for (std::size_t r = 0; r < R; ++r) {
                const Slot& s = slots[r * E + e];
                if (s.status == "ok") v.push_back(s.result.theta(j));
            }
            out.summary.rows.push_back({to_string(cfg.estimators[e]), "theta_" + std::to_string(j + 1),
                                        fmt_int(static_cast<long long>(v.size())), format_double(mean_of(v)),
                                        format_double(sd_of(v))});
        }
    }
    return out;
}

}  // namespace owmmd
