#include <cmath>
#include <random>

#include "doctest.h"

#include "dfols/bench.hpp"

using namespace dfols;

namespace {

RunRecord synthetic(const std::vector<double>& f_true, const std::vector<double>& f_noisy, double f0 = 1.0,
                    double f_star = 0.0) {
    RunRecord r;
    r.problem = "synthetic";
    r.n = 2;
    r.m = 3;
    r.f0_true = f0;
    r.f_star = f_star;
    for (std::size_t i = 0; i < f_true.size(); ++i)
        r.trace.push_back({static_cast<long>(i + 1), f_true[i], f_noisy.empty() ? f_true[i] : f_noisy[i]});
    r.budget = static_cast<long>(f_true.size());
    r.n_evals = r.budget;
    return r;
}

// A run of problem `name` with dimension n that first reaches f = 0 at budget index `at`.
RunRecord solved_at(const std::string& name, int n, long at, std::uint64_t seed = 0) {
    RunRecord r;
    r.problem = name;
    r.seed = seed;
    r.n = n;
    r.m = n;
    r.f0_true = 1.0;
    r.f_star = 0.0;
    r.trace.push_back({1, 1.0, 1.0});
    if (at > 0) r.trace.push_back({at, 0.0, 0.0});
    return r;
}

}  // namespace

TEST_CASE("measure_true: immediate, never and a crossing matched by a linear scan") {
    CHECK(measure_true(synthetic({1e-9, 1e-10}, {}), 1e-5) == 1.0);
    CHECK(measure_true(synthetic({1.0, 0.5, 0.4}, {}), 1e-5) == kNeverSolved);

    std::vector<double> f;
    for (int i = 1; i <= 40; ++i) f.push_back(std::pow(0.5, i));
    const RunRecord r = synthetic(f, {});
    const double tau = 1e-5;
    double scan = kNeverSolved;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i] <= tau) {
            scan = static_cast<double>(i + 1);
            break;
        }
    CHECK(scan == 17.0);
    CHECK(measure_true(r, tau) == scan);
}

TEST_CASE("measure_noisy: zero noise collapse and a lucky dip") {
    std::vector<double> f;
    for (int i = 1; i <= 40; ++i) f.push_back(std::pow(0.5, i));
    const RunRecord r = synthetic(f, {});
    CHECK(measure_noisy(r, 1e-5, NoiseModel{}) == measure_true(r, 1e-5));

    std::vector<double> noisy = f;
    noisy[4] = 1e-7;
    const RunRecord dip = synthetic(f, noisy);
    CHECK(measure_noisy(dip, 1e-5, NoiseModel{}) == 5.0);
    CHECK(measure_true(dip, 1e-5) == 17.0);
}

TEST_CASE("measure_noisy: additive threshold uses f_star + m sigma^2") {
    const NoiseModel add = NoiseModel::parse("add_gaussian:0.1");
    // m = 3: E[f~(x*)] = 0.03, E[f~(x0)] = 1.03, threshold at tau = 0.5 is 0.53.
    const RunRecord r = synthetic({0.9, 0.6, 0.54, 0.52}, {0.9, 0.6, 0.54, 0.52});
    CHECK(measure_noisy(r, 0.5, add) == 4.0);
    CHECK(measure_true(r, 0.5) == kNeverSolved);
    const RunRecord s = synthetic({0.9, 0.535}, {0.9, 0.535});
    CHECK(measure_noisy(s, 0.5, add) == kNeverSolved);
}

TEST_CASE("tau_crit: catalog problems under Gaussian noise") {
    const NoiseModel add = NoiseModel::parse("add_gaussian:1e-2");
    CHECK(tau_crit(find_problem("linear_full_rank"), add) == doctest::Approx(1e-2).epsilon(1e-12));
    CHECK(tau_crit(find_problem("heart8_s1"), add) == doctest::Approx(1e-13).epsilon(1e-12));
    CHECK(tau_crit(find_problem("rosenbrock"), NoiseModel{}) == 0.0);
    // Multiplicative noise at a nonzero-residual minimum: a power of ten, small relative to the gap.
    const double t = tau_crit(find_problem("osborne1"), NoiseModel::parse("mult_gaussian:1e-2"));
    CHECK(t == doctest::Approx(std::pow(10.0, std::round(std::log10(t)))).epsilon(1e-12));
    CHECK(t <= 1e-6);
    CHECK(t >= 1e-7);
}

TEST_CASE("tau_p: clamp between the requested accuracy and 0.1") {
    CHECK(tau_p(1e-5, 1e-7) == 1e-5);
    CHECK(tau_p(1e-5, 1e-2) == 1e-2);
    CHECK(tau_p(1e-5, 1.0) == 1e-1);
}

TEST_CASE("default_alpha_grid: breakpoints") {
    const std::vector<double> g = default_alpha_grid(2000);
    CHECK(g.front() == doctest::Approx(0.1));
    CHECK(std::count_if(g.begin(), g.end(), [](double a) { return a <= 10.0 + 1e-9; }) == 100);
    CHECK(std::find_if(g.begin(), g.end(), [](double a) { return std::abs(a - 11.0) < 1e-9; }) != g.end());
    CHECK(std::find_if(g.begin(), g.end(), [](double a) { return std::abs(a - 110.0) < 1e-9; }) != g.end());
    CHECK(std::find_if(g.begin(), g.end(), [](double a) { return std::abs(a - 1100.0) < 1e-9; }) != g.end());
    CHECK(g.back() == doctest::Approx(2000.0));
    CHECK(std::is_sorted(g.begin(), g.end()));
}

TEST_CASE("data_profile: all solved, none solved and a half step") {
    const std::vector<double> grid = default_alpha_grid(100);
    {
        const std::vector<RunRecord> recs{solved_at("a", 2, 1), solved_at("b", 4, 1)};
        const DataProfile p = data_profile(recs, Measure::true_f, 1e-5, TauMode::fixed, {}, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (grid[i] >= 1.0 / 3.0) CHECK(p.proportion[i] == 1.0);
    }
    {
        const std::vector<RunRecord> recs{solved_at("a", 2, 0), solved_at("b", 4, 0)};
        const DataProfile p = data_profile(recs, Measure::true_f, 1e-5, TauMode::fixed, {}, grid);
        for (double v : p.proportion) CHECK(v == 0.0);
    }
    {
        // n = 2: solved at index 6 means alpha = 6 / 3 = 2.
        const std::vector<RunRecord> recs{solved_at("a", 2, 6), solved_at("b", 2, 0)};
        const DataProfile p = data_profile(recs, Measure::true_f, 1e-5, TauMode::fixed, {}, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CAPTURE(grid[i]);
            const double hand = grid[i] * 3.0 >= 6.0 - 1e-9 ? 0.5 : 0.0;
            CHECK(p.proportion[i] == hand);
        }
        CHECK(p.at(1.9) == 0.0);
        CHECK(p.at(2.0) == 0.5);
    }
}

TEST_CASE("data_profile: averaged over seeds") {
    const std::vector<double> grid{1.0, 10.0};
    const std::vector<RunRecord> recs{solved_at("a", 1, 2, 0), solved_at("a", 1, 0, 1)};
    const DataProfile p = data_profile(recs, Measure::true_f, 1e-5, TauMode::fixed, {}, grid);
    CHECK(p.proportion[0] == 0.5);
    CHECK(p.proportion[1] == 0.5);
}

TEST_CASE("make_params: benchmark starting radius and budget") {
    const LeastSquaresProblem p = find_problem("rosenbrock");
    const SolverParams sp = make_params(SolverOptions{}, p, NoiseModel{}, 100.0);
    CHECK(sp.delta0 == doctest::Approx(0.12));
    CHECK(sp.rho_end == 1e-8);
    CHECK(sp.max_evals == 300);
    CHECK_FALSE(sp.noisy);
    const LeastSquaresProblem small = find_problem("brown_almost_linear");
    CHECK(make_params(SolverOptions{}, small, NoiseModel{}, 1.0).delta0 ==
          doctest::Approx(0.1 * std::max(1.0, small.x0.lpNorm<Eigen::Infinity>())));
    CHECK(make_params(SolverOptions{}, p, NoiseModel::parse("mult:0.01"), 1.0).noisy);
    // p_init counts the points besides x0: "2" means two evaluations in the first set.
    CHECK(pinit_for("full", 10) == 0);
    CHECK(pinit_for("2", 10) == 1);
}

TEST_CASE("suite_config_from_json: valid and invalid documents") {
    const SuiteConfig c = suite_config_from_json(
        R"({"problems": ["rosenbrock", "mw"], "noise": {"kind": "mult_gaussian", "sigma": 0.01},
            "seeds": [0, 1, 2], "budget_multiplier": 100, "solver": {"restarts": "soft_moving"}})");
    CHECK(c.problems.size() == 2);
    CHECK(c.noise.kind == NoiseKind::mult_gaussian);
    CHECK(c.seeds.size() == 3);
    CHECK(c.budget_multiplier == 100.0);
    CHECK(c.solver.restarts == RestartKind::soft_moving);
    CHECK_THROWS_AS(suite_config_from_json("{"), std::invalid_argument);
    CHECK_THROWS_AS(suite_config_from_json(R"({"problemz": []})"), std::invalid_argument);
    CHECK_THROWS_AS(suite_config_from_json(R"({"noise": {"kind": "mult", "sigma": -1}})"), std::invalid_argument);
    CHECK_THROWS_AS(expand_problems({"nosuch"}), UnknownProblemError);
    CHECK(expand_problems({}).empty());
}

TEST_CASE("run_suite: identical CSV output across runs and worker counts") {
    SuiteConfig c;
    c.problems = {"rosenbrock", "osborne1", "bard"};
    c.noise = NoiseModel::parse("mult_gaussian:0.01");
    c.seeds = {0, 1, 2};
    c.budget_multiplier = 50;
    c.jobs = 1;
    const std::string a = records_csv(run_suite(c));
    c.jobs = 4;
    const std::string b = records_csv(run_suite(c));
    CHECK(a == b);
    CHECK(a.size() > 100);
}

TEST_CASE("format_double: round trip with 17 significant digits") {
    Rng rng(1);
    std::uniform_real_distribution<double> U(-1e10, 1e10);
    for (int i = 0; i < 100; ++i) {
        const double v = U(rng);
        CHECK(std::stod(format_double(v)) == v);
    }
}
