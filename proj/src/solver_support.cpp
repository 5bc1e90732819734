#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfols/solver.hpp"

namespace dfols {

std::string to_string(ExitFlag f) {
    switch (f) {
        case ExitFlag::none: return "none";
        case ExitFlag::small_objective: return "small_objective";
        case ExitFlag::small_trust_region: return "small_trust_region";
        case ExitFlag::budget: return "budget";
        case ExitFlag::slow_progress: return "slow_progress";
        case ExitFlag::noise_level: return "noise_level";
        case ExitFlag::restarts_exhausted: return "restarts_exhausted";
    }
    return "unknown";
}

std::string to_string(RestartKind k) {
    switch (k) {
        case RestartKind::off: return "off";
        case RestartKind::hard: return "hard";
        case RestartKind::soft_moving: return "soft_moving";
        case RestartKind::soft_fixed: return "soft_fixed";
    }
    return "unknown";
}

RestartKind parse_restart_kind(const std::string& s) {
    if (s == "off" || s == "none") return RestartKind::off;
    if (s == "hard") return RestartKind::hard;
    if (s == "soft_moving") return RestartKind::soft_moving;
    if (s == "soft_fixed") return RestartKind::soft_fixed;
    throw std::invalid_argument("unknown restart kind: " + s);
}

namespace sampling {

SamplesFn one() {
    return [](double, double, long, int) { return 1; };
}

SamplesFn constant(int n) {
    if (n < 1) throw std::invalid_argument("sampling::constant: N must be positive");
    return [n](double, double, long, int) { return n; };
}

SamplesFn inverse_delta() {
    return [](double, double delta, long, int) {
        const double v = std::floor(1.0 / delta);
        return v >= 1e9 ? 1000000000 : std::max(1, static_cast<int>(v));
    };
}

SamplesFn restart_scaled(int cap) {
    return [cap](double, double, long, int n_restarts) { return std::min(n_restarts + 1, cap); };
}

SamplesFn parse(const std::string& spec) {
    if (spec == "one") return one();
    if (spec == "invdelta") return inverse_delta();
    if (spec == "restart-scaled") return restart_scaled();
    if (spec.rfind("const:", 0) == 0) {
        std::size_t used = 0;
        const std::string num = spec.substr(6);
        int n = 0;
        try {
            n = std::stoi(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != num.size() || n < 1) throw std::invalid_argument("bad sample count in " + spec);
        return constant(n);
    }
    throw std::invalid_argument("unknown sampling policy: " + spec);
}

}  // namespace sampling

SolverParams SolverParams::smooth_defaults(int) { return SolverParams{}; }

SolverParams SolverParams::noisy_defaults(int) {
    SolverParams p;
    p.noisy = true;
    p.gamma_dec = 0.98;
    p.alpha1 = 0.9;
    p.alpha2 = 0.95;
    p.restarts.kind = RestartKind::soft_moving;
    p.restarts.autodetect = true;
    return p;
}

SolverParams SolverParams::resolved(int n) const {
    if (n < 1) throw std::invalid_argument("dimension must be positive");
    SolverParams p = *this;
    if (p.p == 0) p.p = n;
    if (p.p_init == 0) p.p_init = p.p;
    if (p.max_evals == 0) p.max_evals = 100L * (n + 1);
    if (p.multi_move_count == 0) p.multi_move_count = std::max(1, (p.p + 1) / (n + 1) - 1);
    if (!p.nsamples) p.nsamples = sampling::one();

    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid solver parameters: ") + what);
    };
    need(0.0 < p.gamma_dec && p.gamma_dec < 1.0, "0 < gamma_dec < 1");
    need(1.0 < p.gamma_inc && p.gamma_inc <= p.gamma_inc_bar, "1 < gamma_inc <= gamma_inc_bar");
    need(0.0 < p.alpha1 && p.alpha1 < p.alpha2 && p.alpha2 < 1.0, "0 < alpha1 < alpha2 < 1");
    need(0.0 < p.eta1 && p.eta1 <= p.eta2 && p.eta2 < 1.0, "0 < eta1 <= eta2 < 1");
    need(0.0 < p.rho_end && p.rho_end < p.delta0 && p.delta0 <= p.delta_max, "0 < rho_end < delta0 <= delta_max");
    need(0.0 < p.omega_s && p.omega_s < 1.0, "0 < omega_s < 1");
    need(0.0 < p.gamma_s, "gamma_s > 0");
    need(p.p >= n, "p >= n");
    need(1 <= p.p_init && p.p_init <= p.p, "1 <= p_init <= p");
    need(p.max_evals >= 1, "max_evals >= 1");
    need(p.restarts.soft_points >= 1 && p.restarts.max_unsuccessful >= 1 && p.restarts.window >= 2,
         "restart settings");
    need(p.slow.history >= 1 && p.slow.consecutive >= 1, "slow-decrease settings");
    need(p.multi_move_count >= 1, "multi_move_count >= 1");
    need(p.perturb_scale > 0.0, "perturb_scale > 0");
    return p;
}

RadiusUpdate update_radii(double ratio, double delta, double rho, double step_norm, const SolverParams& params) {
    RadiusUpdate out;
    if (std::isnan(ratio)) ratio = -std::numeric_limits<double>::infinity();
    if (ratio >= params.eta2) {
        out.delta = std::min(std::max(params.gamma_inc * delta, params.gamma_inc_bar * step_norm), params.delta_max);
    } else if (ratio >= params.eta1) {
        out.delta = std::max({params.gamma_dec * delta, step_norm, rho});
    } else {
        out.delta = std::max(std::min(params.gamma_dec * delta, step_norm), rho);
    }
    out.delta = std::min(out.delta, params.delta_max);
    out.reduce_rho = ratio < params.eta1 && out.delta <= rho;
    return out;
}

bool check_slow_decrease(const std::vector<double>& h, const SlowDecreaseParams& params) {
    if (!params.enabled) return false;
    const std::size_t K = static_cast<std::size_t>(params.history);
    const std::size_t N = static_cast<std::size_t>(params.consecutive);
    if (h.size() < K + N) return false;
    for (std::size_t j = 0; j < N; ++j) {
        const std::size_t i = h.size() - 1 - j;
        if (!(h[i] > 0.0) || !(h[i - K] > 0.0)) return false;
        const double avg = (std::log(h[i - K]) - std::log(h[i])) / static_cast<double>(K);
        if (!(avg < params.threshold)) return false;
    }
    return true;
}

bool check_noise_level_termination(const InterpolationSet& set, const NoiseLevelParams& params) {
    if (!params.enabled || set.size() == 0) return false;
    const double fk = set.base_objective();
    const bool mult = params.mode == NoiseLevelMode::multiplicative && fk != 0.0;
    for (std::size_t t = 0; t < set.size(); ++t) {
        const double tol = params.scale * params.level / std::sqrt(static_cast<double>(std::max(1, set.sample_count(t))));
        const double gap = mult ? std::abs(set.objective(t) / fk - 1.0) : std::abs(set.objective(t) - fk);
        if (!(gap <= tol)) return false;
    }
    return true;
}

bool auto_detect_restart(const RestartHistory& history, const RestartParams& params) {
    const std::size_t W = static_cast<std::size_t>(params.window);
    const auto& ev = history.radius_events;
    if (ev.size() < W) return false;
    int inc = 0, dec = 0, cst = 0;
    for (std::size_t i = ev.size() - W; i < ev.size(); ++i) {
        if (ev[i] == RadiusEvent::increased) ++inc;
        else if (ev[i] == RadiusEvent::decreased) ++dec;
        else ++cst;
    }
    if (inc > 0 || dec < 2 * cst) return false;
    const double first = static_cast<double>(ev.size() - W);
    std::vector<std::pair<double, double>> pts;
    for (auto it = history.jacobian_changes.rbegin(); it != history.jacobian_changes.rend() && it->first >= first; ++it)
        pts.push_back(*it);
    if (pts.size() < 2) return false;
    const LinearFit fit = linear_fit(pts);
    return fit.slope >= params.slope_threshold && fit.correlation >= params.correlation_threshold;
}

Vector ScaledProblem::to_internal(const Vector& x) const { return (x - shift).cwiseQuotient(scale); }

Vector ScaledProblem::to_external(const Vector& z) const { return shift + scale.cwiseProduct(z); }

ScaledProblem apply_variable_scaling(const ResidualFn& fn, const Box& bounds) {
    if (!bounds.finite()) throw std::invalid_argument("variable scaling needs finite bounds");
    if (((bounds.upper - bounds.lower).array() <= 0.0).any())
        throw std::invalid_argument("variable scaling needs upper > lower");
    ScaledProblem sp;
    const int n = static_cast<int>(bounds.lower.size());
    sp.shift = bounds.lower;
    sp.scale = bounds.upper - bounds.lower;
    sp.box = Box{Vector::Zero(n), Vector::Ones(n)};
    const Vector shift = sp.shift, scale = sp.scale;
    sp.fn = [fn, shift, scale](const Vector& z) { return fn(shift + scale.cwiseProduct(z)); };
    return sp;
}

Results solve(const ResidualFn& fn, const Vector& x0, const std::optional<Box>& bounds,
              const std::optional<SolverParams>& params, std::uint64_t seed, const EvaluationObserver& observer) {
    const int n = static_cast<int>(x0.size());
    const SolverParams p = params ? *params : SolverParams::smooth_defaults(n);
    if (!p.scale_variables) {
        Solver s(fn, x0, bounds, p, seed, observer);
        return s.run();
    }
    if (!bounds) throw std::invalid_argument("variable scaling needs bounds");
    const ScaledProblem sp = apply_variable_scaling(fn, *bounds);
    EvaluationObserver mapped;
    if (observer) mapped = [&](const Vector& z, const Evaluation& e, long k) { observer(sp.to_external(z), e, k); };
    Solver s(sp.fn, sp.to_internal(x0).cwiseMax(0.0).cwiseMin(1.0), sp.box, p, seed, mapped);
    Results r = s.run();
    r.x = sp.to_external(r.x);
    return r;
}

}  // namespace dfols
