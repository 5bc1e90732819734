#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfols/problems.hpp"
#include "dfols/solver.hpp"

namespace dfols {

// One evaluation seen by the solver: budget index, true f at the point, and the f~ the solver used.
struct TraceEntry {
    long index = 0;
    double f_true = 0.0;
    double f_noisy = 0.0;
};

// A solver run on one (problem, noise, seed). The trace keeps only the evaluations where the
// running minimum of f_true or of f_noisy improves, which is all N_p and N~_p depend on.
struct RunRecord {
    std::string problem;
    std::string config;
    NoiseModel noise;
    std::uint64_t seed = 0;
    int n = 0;
    int m = 0;
    double f0_true = 0.0;
    double f_star = 0.0;
    std::vector<TraceEntry> trace;
    long budget = 0;
    long n_evals = 0;
    ExitFlag exit_flag = ExitFlag::none;
    int n_restarts = 0;
    double f_final = 0.0;
    long cauchy_violations = 0;
    long cauchy_checks = 0;
    bool failed = false;
    std::string error;
};

constexpr double kNeverSolved = std::numeric_limits<double>::infinity();

// Accuracy threshold a* + tau (a0 - a*).
double solved_threshold(double a0, double a_star, double tau);

// First trace index with f_true <= f* + tau (f0 - f*), or kNeverSolved.
double measure_true(const RunRecord& record, double tau_p);
// First trace index with f~ <= E[f~(x*)] + tau (E[f~(x0)] - E[f~(x*)]), or kNeverSolved.
double measure_noisy(const RunRecord& record, double tau_p, const NoiseModel& noise);

class DegenerateProblemError : public std::runtime_error {
public:
    DegenerateProblemError() : std::runtime_error("degenerate problem") {}
};

// 10^ceil(log10(sigma(x*) / E[f~(x0) - f~(x*)])); 0 for deterministic noise.
double tau_crit(const LeastSquaresProblem& problem, const NoiseModel& noise, int n_samples = 100000,
                std::uint64_t seed = 0);
// min(1e-1, max(tau_crit, tau)).
double tau_p(double tau, double tau_crit_value);

enum class Measure { true_f, noisy };
enum class TauMode { fixed, adaptive };

std::string to_string(Measure m);
std::string to_string(TauMode t);

struct DataProfile {
    Measure measure = Measure::true_f;
    TauMode tau_mode = TauMode::adaptive;
    double tau = 1e-5;
    std::vector<double> alpha;
    std::vector<double> proportion;

    // Proportion at the largest grid value <= a (0 below the grid).
    double at(double a) const;
    double final() const { return proportion.empty() ? 0.0 : proportion.back(); }
};

// Breakpoints 0.1..10 step 0.1, 11..100 step 1, 110..1000 step 10, 1100..max step 100.
std::vector<double> default_alpha_grid(double max_alpha);

// Proportion of problems with N_p <= alpha (n_p + 1), averaged over seeds. tau_crits maps
// problem name to tau_crit (missing entries count as 0); it is ignored for TauMode::fixed.
DataProfile data_profile(const std::vector<RunRecord>& records, Measure measure, double tau, TauMode mode,
                         const std::map<std::string, double>& tau_crits, const std::vector<double>& alphas);

// Command-line level solver knobs; unset fields keep the defaults.
struct SolverOptions {
    std::string label = "default";
    std::string defaults = "auto";                 // auto (noisy when noise is random), smooth, noisy
    std::optional<RestartKind> restarts;
    std::optional<bool> autodetect;
    std::string nsamples = "one";
    double regression_multiplier = 0.0;            // C > 0: C (n+1) points in the set
    std::string pinit = "full";                    // full, 2, quartern, halfn
    GrowingMode growing = GrowingMode::svd_repair;
};

// Initial set size parameter for a --pinit mode at dimension n.
int pinit_for(const std::string& mode, int n);

// Benchmark settings: delta0 = 0.1 max(|x0|_inf, 1), rho_end = 1e-8, budget multiplier (n+1).
SolverParams make_params(const SolverOptions& options, const LeastSquaresProblem& problem, const NoiseModel& noise,
                         double budget_multiplier);

struct SuiteConfig {
    std::vector<std::string> problems;             // names or tags, expanded by expand_problems
    NoiseModel noise;
    std::vector<std::uint64_t> seeds{0};
    double budget_multiplier = 1e4;
    double tau = 1e-5;
    std::string measure = "both";                  // true, noisy, both
    SolverOptions solver;
    int jobs = 1;
    int tau_crit_samples = 100000;
};

std::vector<LeastSquaresProblem> expand_problems(const std::vector<std::string>& names);

RunRecord run_problem(const LeastSquaresProblem& problem, const SolverOptions& options, const NoiseModel& noise,
                      std::uint64_t seed, double budget_multiplier);

// Runs every (problem, seed) pair, in parallel over `jobs` workers; records are ordered by
// problem then seed whatever the completion order.
std::vector<RunRecord> run_suite(const SuiteConfig& config);

// tau_crit for every problem of the suite, from one shared estimate of the noise at x*.
std::map<std::string, double> suite_tau_crits(const SuiteConfig& config);

// Profiles for the configured measures ("true", "noisy" or both), each with adaptive and fixed tau.
std::vector<DataProfile> suite_profiles(const SuiteConfig& config, const std::vector<RunRecord>& records,
                                        const std::map<std::string, double>& tau_crits);

// Output artifacts; doubles use 17 significant digits.
std::string format_double(double v);
std::string records_csv(const std::vector<RunRecord>& records);
std::string profiles_csv(const std::vector<DataProfile>& profiles);
std::string profiles_svg(const std::vector<DataProfile>& profiles, const std::string& title);

// JSON config (keys problems, noise {kind, sigma}, solver {...}, seeds, budget_multiplier, tau,
// measure, jobs) and summary document.
SuiteConfig suite_config_from_json(const std::string& text);
std::string summary_json(const SuiteConfig& config, const std::vector<RunRecord>& records,
                         const std::vector<DataProfile>& profiles, const std::map<std::string, double>& tau_crits);

}  // namespace dfols
