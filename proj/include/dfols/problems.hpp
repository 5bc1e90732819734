#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfols/solver.hpp"

namespace dfols {

struct LeastSquaresProblem {
    std::string name;
    int n = 0;
    int m = 0;
    ResidualFn residual;
    Vector x0;
    std::optional<Box> bounds;
    double f_star = 0.0;
    Vector x_star;          // a minimizer attaining f_star (used for the noise scale at the solution)
    bool zero_residual = false;
    bool scalable = false;
    int mw_index = 0;       // position in the 53-problem Moré–Wild list, 0 if not in it
    std::vector<std::string> tags;

    double f(const Vector& x) const { return residual(x).squaredNorm(); }
    double f0() const { return f(x0); }
    bool has_tag(const std::string& t) const;
};

class UnknownProblemError : public std::invalid_argument {
public:
    explicit UnknownProblemError(const std::string& name) : std::invalid_argument("unknown problem: " + name) {}
};

// Problems whose name or tag equals filter ("" or "all" returns everything). Tags: "mw"
// (the smooth benchmark subset), "scalable", "variant" (scaled starting points).
std::vector<LeastSquaresProblem> catalog(const std::string& filter = "all");
LeastSquaresProblem find_problem(const std::string& name);
std::vector<std::string> problem_names(const std::string& filter = "all");

enum class NoiseKind { none, mult_gaussian, add_gaussian, add_chi2 };

struct NoiseModel {
    NoiseKind kind = NoiseKind::none;
    double sigma = 0.0;

    bool deterministic() const { return kind == NoiseKind::none || sigma == 0.0; }
    // "none", "mult_gaussian:1e-2", "add_gaussian:0.01", "add_chi2:0.01" (also "mult", "add", "chi2").
    static NoiseModel parse(const std::string& spec);
    std::string str() const;
};

std::string to_string(NoiseKind k);

// SplitMix64 stream usable as a UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()();

private:
    std::uint64_t state_;
};

std::uint64_t hash_string(const std::string& s);
// Order-dependent mix of several keys into one seed.
std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys);

// Applies the noise model to a residual vector using the stream keyed by `key`.
Vector apply_noise(const Vector& r, const NoiseModel& noise, std::uint64_t key);

// A problem plus noise; evaluation i draws from the stream keyed by (seed, problem, run, i).
class NoisyProblem {
public:
    NoisyProblem(LeastSquaresProblem base, NoiseModel noise, std::uint64_t seed, std::uint64_t run = 0);

    Vector evaluate(const Vector& x);
    Vector evaluate_at(const Vector& x, std::uint64_t index) const;
    std::uint64_t evaluations() const { return count_; }
    const LeastSquaresProblem& base() const { return base_; }
    const NoiseModel& noise() const { return noise_; }
    // Callback view that advances this object's counter.
    ResidualFn callback();

private:
    LeastSquaresProblem base_;
    NoiseModel noise_;
    std::uint64_t seed_;
    std::uint64_t run_;
    std::uint64_t name_hash_;
    std::uint64_t count_ = 0;
};

// E[f~] as an affine function of f: none f, mult (1+s^2) f, add/chi2 f + m s^2.
double expected_noisy_objective(const NoiseModel& noise, double f, int m);
double expected_noisy_objective(const LeastSquaresProblem& problem, const NoiseModel& noise, const Vector& x);

// Sample standard deviation of f~(x) over n_samples draws (seeded).
double noise_std_at(const LeastSquaresProblem& problem, const NoiseModel& noise, const Vector& x, int n_samples,
                    std::uint64_t seed = 0);

}  // namespace dfols
