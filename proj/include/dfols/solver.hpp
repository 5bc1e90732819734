#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dfols/model.hpp"
#include "dfols/trust_region.hpp"

namespace dfols {

using ResidualFn = std::function<Vector(const Vector&)>;

enum class RestartKind { off, hard, soft_moving, soft_fixed };
enum class GrowingMode { svd_repair, perturb_step };
enum class MultiMove { nothing, geometry, momentum };
enum class NoiseLevelMode { additive, multiplicative };
enum class ExitFlag { none, small_objective, small_trust_region, budget, slow_progress, noise_level, restarts_exhausted };

std::string to_string(ExitFlag f);
std::string to_string(RestartKind k);
RestartKind parse_restart_kind(const std::string& s);

// Number of samples to average: f(rho, delta, iteration, n_restarts).
using SamplesFn = std::function<int(double, double, long, int)>;

namespace sampling {
SamplesFn one();
SamplesFn constant(int n);
SamplesFn inverse_delta();                   // max(1, floor(1/delta))
SamplesFn restart_scaled(int cap = 30);      // min(n_restarts + 1, cap)
// Parses "one", "const:N", "invdelta", "restart-scaled".
SamplesFn parse(const std::string& spec);
}  // namespace sampling

struct RestartParams {
    RestartKind kind = RestartKind::off;
    int soft_points = 3;             // N, capped at p
    int max_unsuccessful = 10;       // M
    bool autodetect = true;
    int window = 30;
    double slope_threshold = 0.015;
    double correlation_threshold = 0.1;
};

struct SlowDecreaseParams {
    bool enabled = true;
    int history = 5;                 // K
    double threshold = 1e-4;         // epsilon
    int consecutive = 5;             // N
};

struct NoiseLevelParams {
    bool enabled = false;
    double level = 0.0;
    NoiseLevelMode mode = NoiseLevelMode::additive;
    double scale = 1.0;
};

struct SolverParams {
    double delta0 = 0.1;
    double delta_max = 1e10;
    double rho_end = 1e-8;
    double gamma_dec = 0.5;
    double gamma_inc = 2.0;
    double gamma_inc_bar = 4.0;
    double alpha1 = 0.1;
    double alpha2 = 0.5;
    double eta1 = 0.1;
    double eta2 = 0.7;
    double omega_s = 0.1;
    double gamma_s = 0.5;
    bool noisy = false;
    int p_init = 0;                  // 0 means p
    int p = 0;                       // 0 means n
    long max_evals = 0;              // 0 means 100 (n+1)
    RestartParams restarts;
    SlowDecreaseParams slow;
    NoiseLevelParams noise_level;
    SamplesFn nsamples;              // empty means one sample
    GrowingMode growing = GrowingMode::svd_repair;
    double perturb_scale = 1.0;      // |d| / delta for the perturbed growing step
    MultiMove multi_move = MultiMove::nothing;
    int multi_move_count = 0;        // 0 means max(1, (p+1)/(n+1) - 1)
    bool scale_variables = false;
    double small_objective_abs = 1e-12;
    double small_objective_rel = 1e-20;
    double geometry_delta_factor = 2.0;   // geometry threshold max(a delta, b rho)
    double geometry_rho_factor = 10.0;
    double replace_power = 4.0;
    double ratio_guard = 1e-15;
    int max_failed_evaluations = 10;
    bool check_cauchy = true;
    bool record_diagnostics = true;

    static SolverParams smooth_defaults(int n);
    static SolverParams noisy_defaults(int n);

    // Fills the 0-valued sizes for dimension n and checks invariants; throws std::invalid_argument.
    SolverParams resolved(int n) const;
};

// Result of a radius update: new delta and whether the (rho, delta) reduction is due.
struct RadiusUpdate {
    double delta = 0.0;
    bool reduce_rho = false;
};

RadiusUpdate update_radii(double ratio, double delta, double rho, double step_norm, const SolverParams& params);

// True iff the last `consecutive` entries each show an average log-decrease below threshold
// over the preceding `history` successful iterations.
bool check_slow_decrease(const std::vector<double>& f_history, const SlowDecreaseParams& params);

bool check_noise_level_termination(const InterpolationSet& set, const NoiseLevelParams& params);

enum class RadiusEvent { increased, decreased, constant };

struct RestartHistory {
    std::vector<RadiusEvent> radius_events;                  // one per iteration since restart
    std::vector<std::pair<double, double>> jacobian_changes; // (iteration, log |J_k - J_{k-1}|_F)
};

bool auto_detect_restart(const RestartHistory& history, const RestartParams& params);

struct Evaluation {
    Vector r;
    double f = std::numeric_limits<double>::infinity();
    int n_samples = 0;
    bool ok = false;
};

enum class Phase { growing, growing_safety, safety, successful, restart, model_improvement, unsuccessful };

struct IterationInfo {
    long iteration = 0;
    long n_evals = 0;
    double delta = 0.0;
    double rho = 0.0;
    double f = 0.0;
    double step_norm = 0.0;
    double ratio = 0.0;
    Phase phase = Phase::unsuccessful;
};

struct Results {
    Vector x;
    double f = 0.0;
    Vector r;
    long n_evals = 0;
    ExitFlag exit_flag = ExitFlag::none;
    int n_restarts = 0;
    long n_iterations = 0;
    long cauchy_violations = 0;
    long cauchy_checks = 0;
    std::vector<IterationInfo> diagnostics;
};

// Called after every averaged evaluation (including failed ones, with ok = false).
using EvaluationObserver = std::function<void(const Vector& x, const Evaluation& e, long n_evals)>;

struct SolverState {
    InterpolationSet set;
    double delta = 0.0;
    double rho = 0.0;
    long iteration = 0;
    long iterations_since_restart = 0;
    long n_evals = 0;
    int n_restarts = 0;
    int unsuccessful_restarts = 0;
    double best_at_last_restart = std::numeric_limits<double>::infinity();
    RestartHistory restart_history;
    Matrix last_jacobian;
    std::vector<double> success_history;
    Vector best_x;
    Vector best_r;
    double best_f = std::numeric_limits<double>::infinity();
    double f0 = 0.0;
    int consecutive_failures = 0;
    int degenerate_repairs = 0;
    long cauchy_violations = 0;
    long cauchy_checks = 0;
};

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The main trust-region loop with each phase exposed as a member.
class Solver {
public:
    Solver(ResidualFn fn, Vector x0, std::optional<Box> bounds, SolverParams params, std::uint64_t seed,
           EvaluationObserver observer = {});

    Results run();

    // Evaluates x0 and the initial directions.
    void initialise();
    // One pass of the main loop; false once an exit flag is set.
    bool iterate();

    void safety_phase();
    void do_restart(RestartKind kind);
    void multi_move_points(MultiMove mechanism, int count, const Vector& step);
    Evaluation evaluate_averaged(const Vector& x);

    const SolverState& state() const { return st_; }
    SolverState& mutable_state() { return st_; }
    const SolverParams& params() const { return prm_; }
    ExitFlag exit_flag() const { return exit_; }
    int n() const { return n_; }

private:
    struct Stop {
        ExitFlag flag;
    };

    template <class F>
    void guarded(F&& body);
    void safety_impl();
    void restart_impl(RestartKind kind);
    void multi_move_impl(MultiMove mechanism, int count, const Vector& step);
    Evaluation evaluate_impl(const Vector& x);
    void record(Phase phase, double step_norm, double ratio);
    void note_evaluation(const Vector& x, const Evaluation& e);
    void reduce_rho_or_finish();
    void restart_or_stop(ExitFlag reason);
    void geometry_step(std::size_t t, double delta);
    void repair_degenerate_set();
    void growing_safety_step();
    Vector feasible_step(const Vector& x) const;
    Matrix directions(std::optional<std::size_t> skip = std::nullopt) const;
    bool growing() const { return static_cast<int>(st_.set.size()) < prm_.p + 1; }
    bool restarts_on() const { return prm_.restarts.kind != RestartKind::off; }
    int samples_for_next() const;
    void finish(ExitFlag flag);

    ResidualFn fn_;
    Vector x0_;
    std::optional<Box> bounds_;
    SolverParams prm_;
    Rng rng_;
    EvaluationObserver observer_;
    SolverState st_;
    ExitFlag exit_ = ExitFlag::none;
    int n_ = 0;
    bool initialised_ = false;
    std::vector<IterationInfo> diag_;
};

// Shift-and-scale map onto [0,1]^n for finite bounds.
struct ScaledProblem {
    ResidualFn fn;
    Box box;        // the unit box
    Vector shift;   // lower
    Vector scale;   // upper - lower

    Vector to_internal(const Vector& x) const;
    Vector to_external(const Vector& z) const;
};

ScaledProblem apply_variable_scaling(const ResidualFn& fn, const Box& bounds);

// Library entry point. Default params are the smooth profile for x0's dimension.
Results solve(const ResidualFn& fn, const Vector& x0, const std::optional<Box>& bounds = std::nullopt,
              const std::optional<SolverParams>& params = std::nullopt, std::uint64_t seed = 0,
              const EvaluationObserver& observer = {});

}  // namespace dfols
