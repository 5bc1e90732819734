// dfols: single solves and benchmark suites from the command line.
//
//   dfols solve rosenbrock --seed 0
//   dfols solve osborne1 --noise mult_gaussian:1e-2 --restarts soft_moving --budget-mult 100
//   dfols bench suite.json --out results --svg

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dfols/bench.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kUsageError = 2;

struct Flags {
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::optional<double> budget_mult;
    std::optional<std::string> noise;
    std::optional<std::string> restarts;
    std::optional<std::string> autodetect;
    std::optional<std::string> nsamples;
    std::optional<double> regression_points;
    std::optional<std::string> pinit;
    std::optional<std::string> growing;
    std::optional<double> tau;
    std::optional<std::string> measure;
    std::optional<std::string> defaults;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--seed", f.seed, "Random seed (falls back to DFLS_SEED, then 0)");
    cmd->add_option("--jobs", f.jobs, "Parallel suite workers")->check(CLI::PositiveNumber);
    cmd->add_option("--budget-mult", f.budget_mult, "Budget in units of n+1 evaluations")->check(CLI::PositiveNumber);
    cmd->add_option("--noise", f.noise, "none | mult_gaussian:S | add_gaussian:S | add_chi2:S");
    cmd->add_option("--restarts", f.restarts, "Restart kind")
        ->check(CLI::IsMember({"off", "hard", "soft_moving", "soft_fixed"}));
    cmd->add_option("--autodetect", f.autodetect, "Restart auto-detection")->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--nsamples", f.nsamples, "one | const:N | invdelta | restart-scaled");
    cmd->add_option("--regression-points", f.regression_points, "Use C (n+1) interpolation points")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--pinit", f.pinit, "Initial set size")->check(CLI::IsMember({"full", "2", "quartern", "halfn"}));
    cmd->add_option("--growing", f.growing, "Growing-phase model")->check(CLI::IsMember({"svd", "perturb"}));
    cmd->add_option("--defaults", f.defaults, "Parameter profile")->check(CLI::IsMember({"auto", "smooth", "noisy"}));
    cmd->add_option("--tau", f.tau, "Accuracy level for the profiles");
    cmd->add_option("--measure", f.measure, "Profile measure")->check(CLI::IsMember({"true", "noisy", "both"}));
}

std::optional<std::uint64_t> seed_from(const Flags& f) {
    if (f.seed) return f.seed;
    if (const char* env = std::getenv("DFLS_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') throw std::invalid_argument("DFLS_SEED is not an integer");
        return v;
    }
    return std::nullopt;
}

void apply_solver_flags(const Flags& f, dfols::SolverOptions& o) {
    if (f.defaults) o.defaults = *f.defaults;
    if (f.restarts) o.restarts = dfols::parse_restart_kind(*f.restarts);
    if (f.autodetect) o.autodetect = *f.autodetect == "on";
    if (f.nsamples) {
        dfols::sampling::parse(*f.nsamples);
        o.nsamples = *f.nsamples;
    }
    if (f.regression_points) o.regression_multiplier = *f.regression_points;
    if (f.pinit) o.pinit = *f.pinit;
    if (f.growing) o.growing = *f.growing == "perturb" ? dfols::GrowingMode::perturb_step : dfols::GrowingMode::svd_repair;
}

int cmd_solve(const std::string& name, const Flags& f) {
    dfols::LeastSquaresProblem problem;
    try {
        problem = dfols::find_problem(name);
    } catch (const dfols::UnknownProblemError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    dfols::SolverOptions options;
    dfols::NoiseModel noise;
    std::uint64_t seed = 0;
    try {
        apply_solver_flags(f, options);
        if (f.noise) noise = dfols::NoiseModel::parse(*f.noise);
        seed = seed_from(f).value_or(0);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }

    const double budget_mult = f.budget_mult.value_or(1e4);
    const dfols::SolverParams params = dfols::make_params(options, problem, noise, budget_mult);
    dfols::NoisyProblem np(problem, noise, seed);
    const std::uint64_t solver_seed = dfols::mix_keys({seed, dfols::hash_string(problem.name), 0x5eedULL});
    dfols::Results res;
    try {
        res = dfols::solve(np.callback(), problem.x0, problem.bounds, params, solver_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    json out;
    out["problem"] = problem.name;
    out["seed"] = seed;
    out["x"] = std::vector<double>(res.x.data(), res.x.data() + res.x.size());
    out["f"] = res.f;
    out["f_true"] = problem.f(res.x);
    out["n_evals"] = res.n_evals;
    out["exit_flag"] = dfols::to_string(res.exit_flag);
    out["n_restarts"] = res.n_restarts;
    out["cauchy_violations"] = res.cauchy_violations;
    std::cout << out.dump(2) << "\n";
    return 0;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

int cmd_bench(const std::string& config_path, const Flags& f, const std::string& out_dir, bool svg) {
    dfols::SuiteConfig config;
    try {
        std::ifstream in(config_path);
        if (!in) throw std::invalid_argument("cannot read " + config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        config = dfols::suite_config_from_json(ss.str());
        apply_solver_flags(f, config.solver);
        if (f.noise) config.noise = dfols::NoiseModel::parse(*f.noise);
        if (f.budget_mult) config.budget_multiplier = *f.budget_mult;
        if (f.tau) config.tau = *f.tau;
        if (f.measure) config.measure = *f.measure;
        if (f.jobs > 1) config.jobs = f.jobs;
        // An explicit seed shifts the configured seed list so it keeps its length.
        if (const auto s = seed_from(f)) {
            const std::uint64_t first = config.seeds.front();
            for (auto& v : config.seeds) v = v - first + *s;
        }
        if (dfols::expand_problems(config.problems).empty()) throw std::invalid_argument("config lists no problems");
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }

    const std::vector<dfols::RunRecord> records = dfols::run_suite(config);
    const std::map<std::string, double> tau_crits = dfols::suite_tau_crits(config);
    const std::vector<dfols::DataProfile> profiles = dfols::suite_profiles(config, records, tau_crits);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_file(dir / "records.csv", dfols::records_csv(records));
    write_file(dir / "profiles.csv", dfols::profiles_csv(profiles));
    write_file(dir / "summary.json", dfols::summary_json(config, records, profiles, tau_crits));
    if (svg) write_file(dir / "profiles.svg", dfols::profiles_svg(profiles, config.solver.label));

    long failed = 0;
    for (const auto& r : records) failed += r.failed;
    std::cerr << records.size() << " runs, " << failed << " failed; wrote " << dir.string() << "\n";
    return records.size() > static_cast<std::size_t>(failed) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Derivative-free least-squares solver and benchmark harness"};
    app.require_subcommand(1);

    Flags solve_flags, bench_flags;
    std::string problem, config_path, out_dir = ".";
    bool svg = false;

    CLI::App* solve = app.add_subcommand("solve", "Solve one catalog problem and print a JSON report");
    solve->add_option("problem", problem, "Problem name")->required();
    add_common(solve, solve_flags);

    CLI::App* bench = app.add_subcommand("bench", "Run a benchmark suite from a JSON config");
    bench->add_option("config", config_path, "Suite config file")->required();
    bench->add_option("--out", out_dir, "Output directory");
    bench->add_flag("--svg", svg, "Also write profiles.svg");
    add_common(bench, bench_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*solve) return cmd_solve(problem, solve_flags);
        return cmd_bench(config_path, bench_flags, out_dir, svg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
