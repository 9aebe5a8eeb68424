// owmmd: batch runner for MMD estimation experiments.

#include "owmmd/embeddings.hpp"
#include "owmmd/estimators.hpp"
#include "owmmd/experiment.hpp"
#include "owmmd/parallel.hpp"
#include "owmmd/random.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using namespace owmmd;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPartial = 4;

struct CommonOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    int threads = 0;  // 0: config or OW_THREADS
    std::string output;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("-c,--config", opts.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("-s,--set", opts.overrides, "Override, key=value with dotted keys (repeatable)");
    cmd->add_option("--seed", opts.seed, "Master seed")->required();
    cmd->add_option("-j,--threads", opts.threads, "Worker threads (overrides OW_THREADS and config)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("-o,--output", opts.output, "Result CSV path (default: config output, else stdout)");
}

ExperimentConfig resolve(const CommonOptions& opts) {
    ExperimentConfig cfg = load_config(opts.config, opts.overrides, opts.seed);
    cfg.threads = threads_from_env(cfg.threads);
    if (opts.threads > 0) cfg.threads = opts.threads;
    if (!opts.output.empty()) cfg.output = opts.output;
    return cfg;
}

std::string summary_path(const std::string& output) {
    std::filesystem::path p(output);
    const std::string stem = p.stem().string();
    return (p.parent_path() / (stem + "_summary.csv")).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

int emit(const ExperimentConfig& cfg, const RunOutput& run) {
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
    if (cfg.output.empty()) {
        std::cout << run.results.to_csv();
        std::cerr << run.summary.to_csv();
    } else {
        write_file(cfg.output, run.results.to_csv());
        write_file(summary_path(cfg.output), run.summary.to_csv());
        std::cerr << run.summary.to_csv();
    }
    if (run.failures > 0) {
        std::cerr << run.failures << " run(s) failed; see the status column\n";
        return kExitPartial;
    }
    return kExitOk;
}

template <typename Fn>
int guarded_main(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ArgumentError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalConditioningError& e) {
        std::cerr << "numerical failure: " << e.what() << " (final jitter " << e.final_jitter() << ")\n";
        return kExitNumerical;
    } catch (const std::runtime_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}

// ---- selftest ----------------------------------------------------------------

int selftest(std::uint64_t seed) {
    int failed = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        if (!ok) ++failed;
    };
    Rng rng(seed);

    {
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const KernelSpec c = KernelSpec::squared_exponential(rng.uniform(0.05, 2.0));
            Vector u(1);
            u(0) = rng.uniform();
            const double exact = embed_se_uniform(c, u);
            const double quad = embed_quadrature(c, BaseMeasure::uniform(1), u, 4001);
            worst = std::max(worst, std::abs(exact - quad) / std::abs(exact));
        }
        std::ostringstream os;
        os << "max relative gap " << worst;
        report("uniform embedding vs quadrature", worst <= 1e-6, os.str());
    }
    {
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const KernelSpec c = KernelSpec::squared_exponential(rng.uniform(0.2, 3.0));
            Vector mean(1), var(1), u(1);
            mean(0) = rng.uniform(-1.0, 1.0);
            var(0) = rng.uniform(0.2, 2.0);
            u(0) = rng.uniform(-2.0, 2.0);
            const BaseMeasure base = BaseMeasure::gaussian(mean, var);
            const double exact = embed_se_gaussian(c, u, base);
            const double quad = embed_quadrature(c, base, u, 200);
            worst = std::max(worst, std::abs(exact - quad) / std::abs(exact));
        }
        std::ostringstream os;
        os << "max relative gap " << worst;
        report("gaussian embedding vs quadrature", worst <= 1e-6, os.str());
    }
    {
        const BaseMeasure base = BaseMeasure::uniform(2);
        const Matrix U = generate_points(base, PointKind::IID, 32, seed).points;
        const KernelSpec c = KernelSpec::squared_exponential(0.5);
        const OptimalWeights ow = optimal_weights(c, U, base);
        const double best = mmd_c_objective(c, base, U, ow.weights);
        bool ok = true;
        for (int t = 0; t < 200 && ok; ++t) {
            Vector w(32);
            for (Eigen::Index i = 0; i < 32; ++i) w(i) = rng.uniform(-0.1, 0.2);
            ok = best <= mmd_c_objective(c, base, U, w) + 1e-10 + ow.jitter * w.squaredNorm();
        }
        std::ostringstream os;
        os << "objective at w* " << best;
        report("weight optimality", ok, os.str());
    }
    {
        ExperimentConfig cfg = parse_config_text("", {"m=[32]", "n=500", "repeats=3"}, seed);
        cfg.threads = 1;
        const std::string a = run_benchmark(cfg).summary.to_csv();
        cfg.threads = 3;
        const std::string b = run_benchmark(cfg).summary.to_csv();
        report("thread determinism", a == b, "benchmark summary at 1 and 3 threads");
    }
    return failed == 0 ? kExitOk : kExitNumerical;
}

// ---- plotdata ----------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int plotdata(const std::string& input, const std::string& x, const std::string& y,
             const std::vector<std::string>& where, const std::string& output) {
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot read '" + input + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("'" + input + "' is empty");
    const auto header = split_csv_line(line);
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("column '" + name + "' not in " + input);
        return static_cast<std::size_t>(std::distance(header.begin(), it));
    };
    const std::size_t xi = col(x), yi = col(y);
    std::vector<std::pair<std::size_t, std::string>> filters;
    for (const auto& w : where) {
        const auto eq = w.find('=');
        if (eq == std::string::npos) throw ConfigError("filter '" + w + "' is not column=value");
        filters.emplace_back(col(w.substr(0, eq)), w.substr(eq + 1));
    }
    std::ostringstream os;
    os << "# " << x << ' ' << y << '\n';
    while (std::getline(in, line)) {
        const auto cells = split_csv_line(line);
        bool keep = cells.size() == header.size();
        for (const auto& [i, v] : filters) keep = keep && cells[i] == v;
        if (keep) os << cells[xi] << ' ' << cells[yi] << '\n';
    }
    if (output.empty()) {
        std::cout << os.str();
    } else {
        write_file(output, os.str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimally-weighted MMD estimators for simulator-based inference"};
    app.require_subcommand(1);

    std::map<std::string, CommonOptions> opts;
    std::map<std::string, CLI::App*> runs;
    const std::map<std::string, std::string> descriptions = {
        {"benchmark", "MMD^2 between simulations and data at the same parameter"},
        {"slope", "Convergence slope of the MMD error in m"},
        {"gof", "Composite goodness-of-fit test over repeats"},
        {"abc", "Rejection ABC with MMD distances"},
        {"mde", "Minimum-distance estimation over repeats"},
    };
    for (const auto& [name, desc] : descriptions) {
        runs[name] = app.add_subcommand(name, desc);
        add_common(runs[name], opts[name]);
    }

    std::uint64_t selftest_seed = 0;
    auto* st = app.add_subcommand("selftest", "Quick internal consistency checks");
    st->add_option("--seed", selftest_seed, "Seed for the random configurations")->required();

    std::string pd_input, pd_x, pd_y, pd_output;
    std::vector<std::string> pd_where;
    auto* pd = app.add_subcommand("plotdata", "Two-column gnuplot data from a result CSV");
    pd->add_option("input", pd_input, "CSV file")->required()->check(CLI::ExistingFile);
    pd->add_option("--x", pd_x, "Column for the first field")->required();
    pd->add_option("--y", pd_y, "Column for the second field")->required();
    pd->add_option("--where", pd_where, "Keep rows with column=value (repeatable)");
    pd->add_option("-o,--output", pd_output, "Output path (default stdout)");

    app.add_subcommand("defaults", "Print the default configuration");

    CLI11_PARSE(app, argc, argv);

    return guarded_main([&]() -> int {
        if (app.got_subcommand("defaults")) {
            std::cout << default_config_json() << '\n';
            return kExitOk;
        }
        if (st->parsed()) return selftest(selftest_seed);
        if (pd->parsed()) return plotdata(pd_input, pd_x, pd_y, pd_where, pd_output);
        for (const auto& [name, cmd] : runs) {
            if (!cmd->parsed()) continue;
            const ExperimentConfig cfg = resolve(opts[name]);
            if (name == "benchmark") return emit(cfg, run_benchmark(cfg));
            if (name == "slope") return emit(cfg, run_slope(cfg));
            if (name == "gof") return emit(cfg, run_gof(cfg));
            if (name == "abc") return emit(cfg, run_abc(cfg));
            if (name == "mde") return emit(cfg, run_mde(cfg));
        }
        return kExitConfig;
    });
}
