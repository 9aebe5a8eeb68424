#include "owmmd/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace owmmd;

namespace {

// CSV text with the wallclock column blanked, for run-to-run comparison.
std::string without_wallclock(const Table& t) {
    Table copy = t;
    const auto col = copy.column("wallclock_ms");
    if (col >= 0) {
        for (auto& row : copy.rows) row[static_cast<std::size_t>(col)].clear();
    }
    return copy.to_csv();
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

ExperimentConfig small(std::vector<std::string> overrides, std::uint64_t seed = 3) {
    overrides.insert(overrides.begin(), {"n=200", "repeats=2", "m=[16]"});
    return parse_config_text("", overrides, seed);
}

}  // namespace

TEST_CASE("config merging and validation") {
    CHECK_THROWS_AS(parse_config_text(R"({"bogus": 1})", {}, 1), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"kernel_k": {"shape": 1}})", {}, 1), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"kernel_k": {"family": "cauchy"}})", {}, 1), ConfigError);
    CHECK_THROWS_AS(parse_config_text("", {"mde.nope=3"}, 1), ConfigError);
    CHECK_THROWS_AS(parse_config_text("", {"n"}, 1), ConfigError);
    CHECK_THROWS_AS(parse_config_text("", {"n=\"many\""}, 1), ConfigError);
    CHECK_THROWS_AS(parse_config_text("{", {}, 1), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json", {}, 1), ConfigError);

    const ExperimentConfig d = parse_config_text("", {}, 9);
    CHECK(d.seed == 9);
    CHECK(d.simulator == "gandk");
    CHECK(d.estimators.size() == 2);
    CHECK(d.kernel_k.median);
    CHECK(d.mde.init_ranges.size() == 4);

    const ExperimentConfig c = parse_config_text(R"({"n": 50, "estimator": "ow", "kernel_c": {"lengthscale": 0.3}})",
                                                 {"n=60", "points=rqmc", "m=[8,16]"}, 1);
    CHECK(c.n == 60);
    CHECK(c.points == PointKind::RQMC);
    CHECK(c.m_grid == std::vector<Eigen::Index>{8, 16});
    REQUIRE(c.estimators.size() == 1);
    CHECK(c.estimators[0] == EstimatorKind::OW);
    CHECK_FALSE(c.kernel_c.median);
    CHECK(c.kernel_c.spec.lengthscale == 0.3);

    const std::string path = "owmmd_test_config.json";
    {
        std::ofstream f(path);
        f << R"({"repeats": 4, "simulator": {"name": "two_moons"}})";
    }
    const ExperimentConfig fromfile = load_config(path, {"repeats=5"}, 2);
    CHECK(fromfile.repeats == 5);
    CHECK(fromfile.simulator == "two_moons");
    std::remove(path.c_str());
}

TEST_CASE("benchmark headers, cardinality and reproducibility") {
    const ExperimentConfig cfg = small({"m=[8,16,32,64]"});
    const RunOutput a = run_benchmark(cfg);
    CHECK(first_line(a.results.to_csv()) ==
          "run_id,simulator,estimator,points,m,n,seed,mmd2,wallclock_ms,kernel_evals,solve_dim,status");
    CHECK(first_line(a.summary.to_csv()) == "simulator,estimator,points,m,n,repeats,failures,mean_mmd2,sd_mmd2,se_mmd2");
    CHECK(a.results.rows.size() == 4 * 2 * 2);
    CHECK(a.summary.rows.size() == 4 * 2);
    CHECK(a.failures == 0);
    const RunOutput b = run_benchmark(cfg);
    CHECK(without_wallclock(a.results) == without_wallclock(b.results));
    CHECK(a.summary.to_csv() == b.summary.to_csv());

    ExperimentConfig other = cfg;
    other.seed = 4;
    CHECK(without_wallclock(run_benchmark(other).results) != without_wallclock(a.results));
}

TEST_CASE("log-log slope fit") {
    const std::vector<double> m{8, 16, 32, 64, 128};
    std::vector<double> flat(5, 0.3), power;
    for (double v : m) power.push_back(2.0 * std::pow(v, -0.75));
    const SlopeFit f = fit_log_log_slope(m, flat);
    CHECK(std::abs(f.slope) < 1e-12);
    CHECK(f.half_width < 1e-6);
    const SlopeFit p = fit_log_log_slope(m, power);
    CHECK(p.slope == doctest::Approx(-0.75).epsilon(1e-12));
    CHECK(p.intercept == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    std::vector<double> holed = power;
    holed[2] = 0.0;
    const SlopeFit h = fit_log_log_slope(m, holed);
    CHECK(h.used == 4);
    CHECK(h.excluded == std::vector<std::size_t>{2});
    CHECK(h.slope == doctest::Approx(-0.75).epsilon(1e-12));
    CHECK(t_quantile_975(1) == doctest::Approx(12.706).epsilon(1e-4));
    CHECK(t_quantile_975(10) == doctest::Approx(2.228).epsilon(1e-3));
    CHECK(t_quantile_975(100000) == doctest::Approx(1.96).epsilon(1e-3));
}

TEST_CASE("slope runner output") {
    const ExperimentConfig cfg = small({"m=[8,16,32,64]", "slope.reference=quadrature", "slope.quadrature_nodes=60"});
    const RunOutput out = run_slope(cfg);
    CHECK(first_line(out.results.to_csv()) == "estimator,slope,ci_half_width,points_used,m_min,m_max,reference");
    CHECK(first_line(out.summary.to_csv()) == "estimator,m,repeats,mean_abs_mmd2,mean_error");
    CHECK(out.results.rows.size() == 2);
    CHECK(out.summary.rows.size() == 8);
    CHECK(out.results.rows[0][6] == "quadrature");
    CHECK_THROWS_AS(run_slope(small({"m=[8,16,32]"})), ConfigError);
    CHECK_THROWS_AS(run_slope(small({"m=[8,16,32,48]"})), ConfigError);
    CHECK_THROWS_AS(run_slope(small({"m=[8,16,32,64]", "simulator.name=two_moons", "slope.reference=quadrature"})),
                    ConfigError);
}

TEST_CASE("gof with zero repeats writes only the header") {
    const ExperimentConfig cfg = small({"repeats=0"});
    const RunOutput out = run_gof(cfg);
    CHECK(out.results.rows.empty());
    CHECK(first_line(out.results.to_csv()) ==
          "repeat,estimator,seed,reject,statistic,critical_value,failures,theta_hat_1,theta_hat_2,theta_hat_3,"
          "theta_hat_4,wallclock_ms,status");
    CHECK(first_line(out.summary.to_csv()) == "estimator,repeats,valid,rejections,rejection_fraction");
    CHECK_THROWS_AS(run_gof(small({"estimator=ustat"})), ConfigError);
}

TEST_CASE("abc with full acceptance returns every draw in order") {
    const ExperimentConfig cfg = small({"repeats=1", "estimator=ow", "abc.prior_draws=25", "abc.accept_fraction=1",
                                        "abc.prior_ranges=[[2,4],[0.5,1.5],[0,1],[0,0.5]]"});
    const RunOutput out = run_abc(cfg);
    CHECK(first_line(out.results.to_csv()) == "repeat,estimator,rank,distance,theta_1,theta_2,theta_3,theta_4");
    CHECK(first_line(out.summary.to_csv()) == "repeat,estimator,parameter,accepted,median,q25,q75,iqr");
    REQUIRE(out.results.rows.size() == 25);
    for (std::size_t i = 1; i < out.results.rows.size(); ++i) {
        CHECK(std::stod(out.results.rows[i - 1][3]) <= std::stod(out.results.rows[i][3]));
        CHECK(out.results.rows[i][2] == std::to_string(i + 1));
    }
    CHECK(out.summary.rows.size() == 4);
    CHECK_THROWS_AS(run_abc(small({})), ConfigError);
}

TEST_CASE("mde runner output") {
    const ExperimentConfig cfg = small({"repeats=1", "mde.trials=4", "mde.restarts=1", "mde.steps=5", "mde.m=20"});
    const RunOutput out = run_mde(cfg);
    CHECK(first_line(out.results.to_csv()) ==
          "repeat,estimator,seed,loss,theta_1,theta_2,theta_3,theta_4,diverged_restarts,wallclock_ms,status");
    CHECK(out.results.rows.size() == 2);
    CHECK(out.failures == 0);
    CHECK_THROWS_AS(run_mde(small({"mde.restarts=10", "mde.trials=4"})), ConfigError);
}

TEST_CASE("results do not depend on the thread count") {
    auto check = [](std::vector<std::string> overrides, RunOutput (*runner)(const ExperimentConfig&)) {
        ExperimentConfig cfg = small(std::move(overrides));
        cfg.threads = 1;
        const RunOutput a = runner(cfg);
        cfg.threads = 3;
        const RunOutput b = runner(cfg);
        CHECK(without_wallclock(a.results) == without_wallclock(b.results));
        CHECK(a.summary.to_csv() == b.summary.to_csv());
    };
    check({"repeats=3"}, run_benchmark);
    check({"repeats=3", "m=[4,8,16,32]"}, run_slope);
    check({"repeats=2", "gof.bootstrap=2", "gof.n=100", "gof.m=16", "mde.trials=3", "mde.restarts=1", "mde.steps=3",
           "mde.m=16"},
          run_gof);
    check({"repeats=1", "abc.prior_draws=12", "abc.prior_ranges=[[2,4],[0.5,1.5],[0,1],[0,0.5]]"}, run_abc);
    check({"repeats=2", "mde.trials=3", "mde.restarts=1", "mde.steps=3", "mde.m=16"}, run_mde);
}

TEST_CASE("formatting") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(INFINITY) == "inf");
    CHECK(format_double(-INFINITY) == "-inf");
    Table t{{"a", "b"}, {{"1", "2"}}};
    CHECK(t.to_csv() == "a,b\n1,2\n");
    CHECK(t.column("b") == 1);
    CHECK(t.column("c") == -1);
}
