#include "dfols/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dfols {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> indices_by_distance(const InterpolationSet& set, const Vector& center, bool descending) {
    std::vector<std::size_t> idx;
    std::vector<double> dist(set.size());
    for (std::size_t t = 0; t < set.size(); ++t) {
        dist[t] = (set.point(t) - center).norm();
        if (t != set.base_index()) idx.push_back(t);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return descending ? dist[a] > dist[b] : dist[a] < dist[b];
    });
    return idx;
}

}  // namespace

Solver::Solver(ResidualFn fn, Vector x0, std::optional<Box> bounds, SolverParams params, std::uint64_t seed,
               EvaluationObserver observer)
    : fn_(std::move(fn)),
      x0_(std::move(x0)),
      bounds_(std::move(bounds)),
      rng_(seed),
      observer_(std::move(observer)) {
    n_ = static_cast<int>(x0_.size());
    prm_ = params.resolved(n_);
    if (bounds_) {
        if (bounds_->lower.size() != n_ || bounds_->upper.size() != n_)
            throw std::invalid_argument("bounds have the wrong dimension");
        if ((bounds_->lower.array() > bounds_->upper.array()).any())
            throw std::invalid_argument("lower bound exceeds upper bound");
        if (!bounds_->contains(x0_)) throw std::invalid_argument("x0 is not feasible");
    }
    if (!x0_.allFinite()) throw std::invalid_argument("x0 must be finite");
}

template <class F>
void Solver::guarded(F&& body) {
    if (exit_ != ExitFlag::none) return;
    try {
        body();
    } catch (const Stop& s) {
        finish(s.flag);
    }
}

void Solver::finish(ExitFlag flag) {
    if (exit_ == ExitFlag::none) exit_ = flag;
}

int Solver::samples_for_next() const {
    return std::max(1, prm_.nsamples(st_.rho, st_.delta, st_.iteration, st_.n_restarts));
}

Evaluation Solver::evaluate_averaged(const Vector& x) {
    Evaluation e;
    guarded([&] { e = evaluate_impl(x); });
    return e;
}

Evaluation Solver::evaluate_impl(const Vector& x) {
    const long remaining = prm_.max_evals - st_.n_evals;
    if (remaining <= 0) throw Stop{ExitFlag::budget};
    const int N = static_cast<int>(std::min<long>(samples_for_next(), remaining));
    Evaluation e;
    Vector sum;
    bool ok = true;
    for (int i = 0; i < N; ++i) {
        ++st_.n_evals;
        Vector r;
        try {
            r = fn_(x);
        } catch (const std::exception&) {
            ok = false;
            continue;
        }
        if (!r.allFinite() || r.size() == 0) {
            ok = false;
            continue;
        }
        if (sum.size() == 0)
            sum = r;
        else if (sum.size() == r.size())
            sum += r;
        else
            ok = false;
    }
    e.n_samples = N;
    e.ok = ok;
    if (ok) {
        e.r = sum / static_cast<double>(N);
        e.f = e.r.squaredNorm();
    }
    note_evaluation(x, e);
    return e;
}

void Solver::note_evaluation(const Vector& x, const Evaluation& e) {
    if (observer_) observer_(x, e, st_.n_evals);
    if (!e.ok) {
        if (++st_.consecutive_failures > prm_.max_failed_evaluations)
            throw EvaluationError("residual evaluation failed repeatedly");
        return;
    }
    st_.consecutive_failures = 0;
    if (!initialised_ && st_.best_x.size() == 0) st_.f0 = e.f;
    if (e.f < st_.best_f) {
        st_.best_f = e.f;
        st_.best_x = x;
        st_.best_r = e.r;
    }
    if (e.f <= std::max(prm_.small_objective_abs, prm_.small_objective_rel * st_.f0))
        throw Stop{ExitFlag::small_objective};
}

void Solver::initialise() {
    if (initialised_) return;
    guarded([&] {
        // The sampling policy may depend on the radii, so set them before the first evaluation.
        st_.delta = prm_.delta0;
        st_.rho = prm_.delta0;
        const Evaluation e0 = evaluate_impl(x0_);
        if (!e0.ok) throw EvaluationError("residual evaluation failed at x0");
        st_.set = InterpolationSet(x0_, e0.r, e0.n_samples);
        st_.delta = prm_.delta0;
        st_.rho = prm_.delta0;
        const Box* box = bounds_ ? &*bounds_ : nullptr;
        const auto pts = build_initial_set(x0_, prm_.delta0, prm_.p_init, box, rng_);
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const Evaluation e = evaluate_impl(pts[i]);
            if (e.ok) st_.set.append(pts[i], e.r, e.n_samples);
        }
    });
    initialised_ = true;
}

Results Solver::run() {
    initialise();
    while (iterate()) {
    }
    Results res;
    res.x = st_.best_x.size() ? st_.best_x : x0_;
    res.f = st_.best_f;
    res.r = st_.best_r;
    res.n_evals = st_.n_evals;
    res.exit_flag = exit_ == ExitFlag::none ? ExitFlag::budget : exit_;
    res.n_restarts = st_.n_restarts;
    res.n_iterations = st_.iteration;
    res.cauchy_violations = st_.cauchy_violations;
    res.cauchy_checks = st_.cauchy_checks;
    res.diagnostics = std::move(diag_);
    return res;
}

void Solver::record(Phase phase, double step_norm, double ratio) {
    if (!prm_.record_diagnostics) return;
    IterationInfo info;
    info.iteration = st_.iteration;
    info.n_evals = st_.n_evals;
    info.delta = st_.delta;
    info.rho = st_.rho;
    info.f = st_.set.size() ? st_.set.base_objective() : kInf;
    info.step_norm = step_norm;
    info.ratio = ratio;
    info.phase = phase;
    diag_.push_back(info);
}

Vector Solver::feasible_step(const Vector& x) const { return bounds_ ? bounds_->clip(x) : x; }

Matrix Solver::directions(std::optional<std::size_t> skip) const {
    const auto& set = st_.set;
    const Vector& xk = set.base_point();
    Matrix D(n_, 0);
    std::vector<Vector> cols;
    for (std::size_t t = 0; t < set.size(); ++t) {
        if (t == set.base_index() || (skip && *skip == t)) continue;
        cols.push_back(set.point(t) - xk);
    }
    D.resize(n_, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) D.col(static_cast<Eigen::Index>(j)) = cols[j];
    return D;
}

bool Solver::iterate() {
    if (exit_ != ExitFlag::none) return false;
    if (!initialised_) initialise();
    if (exit_ != ExitFlag::none) return false;
    const double delta_start = st_.delta;
    const int restarts_start = st_.n_restarts;
    guarded([&] {
        if (st_.n_evals >= prm_.max_evals) throw Stop{ExitFlag::budget};
        ++st_.iteration;
        ++st_.iterations_since_restart;
        auto& set = st_.set;
        const bool grow = growing();

        if (!grow && check_noise_level_termination(set, prm_.noise_level)) {
            restart_or_stop(ExitFlag::noise_level);
            record(Phase::restart, 0.0, 0.0);
            return;
        }

        LinearResidualModel lm;
        try {
            lm = build_linear_model(set, prm_.growing == GrowingMode::svd_repair);
        } catch (const DegenerateSetError&) {
            repair_degenerate_set();
            record(Phase::model_improvement, 0.0, 0.0);
            return;
        }
        st_.degenerate_repairs = 0;
        if (st_.last_jacobian.rows() == lm.J.rows() && st_.last_jacobian.cols() == lm.J.cols()) {
            const double dj = (lm.J - st_.last_jacobian).norm();
            if (dj > 0.0 && std::isfinite(dj))
                st_.restart_history.jacobian_changes.emplace_back(
                    static_cast<double>(st_.restart_history.radius_events.size()), std::log(dj));
        }
        st_.last_jacobian = lm.J;

        const FullModel fm = full_model(lm);
        if (!std::isfinite(fm.g.squaredNorm()) || !std::isfinite(fm.H.squaredNorm())) {
            // Overflowing model: no step, shrink as in the safety phase.
            if (grow)
                growing_safety_step();
            else
                safety_impl();
            record(grow ? Phase::growing_safety : Phase::safety, 0.0, 0.0);
            return;
        }
        const Vector xk = set.base_point();
        const Vector lower = bounds_ ? Vector(bounds_->lower - xk) : Vector::Constant(n_, -kInf);
        const Vector upper = bounds_ ? Vector(bounds_->upper - xk) : Vector::Constant(n_, kInf);
        const TrustRegionStep step = solve_trust_region(fm, st_.delta, lower, upper);
        if (prm_.check_cauchy) {
            ++st_.cauchy_checks;
            if (!satisfies_cauchy_decrease(fm, st_.delta, lower, upper, step.s)) {
                ++st_.cauchy_violations;
            }
        }

        if (step.s.norm() < prm_.gamma_s * st_.rho) {
            if (grow) {
                growing_safety_step();
                record(Phase::growing_safety, step.s.norm(), 0.0);
            } else {
                safety_impl();
                record(Phase::safety, step.s.norm(), 0.0);
            }
            return;
        }

        Vector s = step.s;
        double pred = step.decrease;
        if (grow && prm_.growing == GrowingMode::perturb_step) {
            const Vector d = random_orthogonal_direction(directions(), rng_);
            s = feasible_step(xk + s + prm_.perturb_scale * st_.delta * d) - xk;
            pred = fm.decrease(s);
        }
        const Vector x_new = feasible_step(xk + s);
        if (set.contains_point(x_new)) {
            safety_impl();
            record(Phase::safety, 0.0, 0.0);
            return;
        }
        const double sn = (x_new - xk).norm();
        const double fk = set.base_objective();
        const Evaluation e = evaluate_impl(x_new);

        double ratio = -kInf;
        if (e.ok && pred > prm_.ratio_guard * std::max(1.0, fm.c)) ratio = (fk - e.f) / pred;
        RadiusUpdate ru = update_radii(ratio, st_.delta, st_.rho, sn, prm_);
        if (!e.ok) {
            // Halve on failure: gamma_dec close to 1 would keep probing the same failing region.
            ru.delta = std::max(0.5 * std::min(st_.delta, sn), st_.rho);
            ru.reduce_rho = ru.delta <= st_.rho;
        }
        st_.delta = ru.delta;

        if (e.ok) {
            if (grow) {
                set.append(x_new, e.r, e.n_samples);
            } else {
                std::size_t t = set.size();
                try {
                    const LagrangeBasis basis = lagrange_basis(set);
                    t = choose_point_to_replace(set, basis, x_new, xk, st_.delta, prm_.replace_power);
                } catch (const DegenerateSetError&) {
                    t = indices_by_distance(set, xk, true).front();
                }
                set.replace(t, x_new, e.r, e.n_samples);
            }
        }
        if (grow) {
            record(Phase::growing, sn, ratio);
            return;
        }

        if (ratio >= prm_.eta1) {
            st_.success_history.push_back(set.base_objective());
            if (prm_.p > n_ && prm_.multi_move != MultiMove::nothing)
                multi_move_impl(prm_.multi_move, prm_.multi_move_count, s);
            record(Phase::successful, sn, ratio);
            if (check_slow_decrease(st_.success_history, prm_.slow)) restart_or_stop(ExitFlag::slow_progress);
            return;
        }

        if (restarts_on() && prm_.restarts.autodetect) {
            // The radius event for this iteration counts towards the window.
            auto& events = st_.restart_history.radius_events;
            events.push_back(st_.delta > delta_start   ? RadiusEvent::increased
                             : st_.delta < delta_start ? RadiusEvent::decreased
                                                       : RadiusEvent::constant);
            const bool detected = auto_detect_restart(st_.restart_history, prm_.restarts);
            events.pop_back();
            if (detected) {
                restart_impl(prm_.restarts.kind);
                record(Phase::restart, sn, ratio);
                return;
            }
        }

        const Vector& xc = set.base_point();
        const double eps = std::max(prm_.geometry_delta_factor * st_.delta, prm_.geometry_rho_factor * st_.rho);
        if (needs_geometry_improvement(set, xc, eps)) {
            geometry_step(indices_by_distance(set, xc, true).front(), st_.delta);
            record(Phase::model_improvement, sn, ratio);
            return;
        }
        record(Phase::unsuccessful, sn, ratio);
        if (ru.reduce_rho) reduce_rho_or_finish();
    });
    if (st_.n_restarts == restarts_start) {
        st_.restart_history.radius_events.push_back(st_.delta > delta_start   ? RadiusEvent::increased
                                                    : st_.delta < delta_start ? RadiusEvent::decreased
                                                                              : RadiusEvent::constant);
    }
    return exit_ == ExitFlag::none;
}

void Solver::reduce_rho_or_finish() {
    if (st_.rho <= prm_.rho_end * (1.0 + 1e-12)) {
        restart_or_stop(ExitFlag::small_trust_region);
        return;
    }
    const double rho = st_.rho;
    st_.delta = prm_.alpha2 * rho;
    st_.rho = prm_.alpha1 * rho;
}

void Solver::restart_or_stop(ExitFlag reason) {
    if (!restarts_on()) throw Stop{reason};
    restart_impl(prm_.restarts.kind);
}

void Solver::safety_phase() {
    guarded([&] { safety_impl(); });
}

void Solver::safety_impl() {
    st_.delta = std::max(st_.rho, prm_.omega_s * st_.delta);
    const Vector xk = st_.set.base_point();
    const double eps = std::max(prm_.geometry_delta_factor * st_.delta, prm_.geometry_rho_factor * st_.rho);
    // A far point is replaced first; rho is reduced once the set is local.
    if (static_cast<int>(st_.set.size()) >= n_ + 1 && needs_geometry_improvement(st_.set, xk, eps)) {
        geometry_step(indices_by_distance(st_.set, xk, true).front(), st_.delta);
        return;
    }
    if (st_.delta <= st_.rho) reduce_rho_or_finish();
}

void Solver::growing_safety_step() {
    const Vector xk = st_.set.base_point();
    const Vector d = random_orthogonal_direction(directions(), rng_);
    Vector y = xk + st_.delta * d;
    if (bounds_ && !bounds_->contains(y)) {
        const Vector ym = xk - st_.delta * d;
        y = bounds_->contains(ym) ? ym : bounds_->clip(y);
    }
    if (st_.set.contains_point(y)) return;
    const Evaluation e = evaluate_impl(y);
    if (e.ok) st_.set.append(y, e.r, e.n_samples);
}

void Solver::geometry_step(std::size_t t, double delta) {
    auto& set = st_.set;
    const Vector xk = set.base_point();
    LagrangeBasis basis;
    try {
        basis = lagrange_basis(set);
    } catch (const DegenerateSetError&) {
        repair_degenerate_set();
        return;
    }
    const Box* box = bounds_ ? &*bounds_ : nullptr;
    const Vector y = geometry_point(basis, t, xk, delta, box, &rng_);
    if (set.contains_point(y)) return;
    const Evaluation e = evaluate_impl(y);
    if (e.ok) set.replace(t, y, e.r, e.n_samples);
}

void Solver::repair_degenerate_set() {
    auto& set = st_.set;
    const Vector xk = set.base_point();
    ++st_.degenerate_repairs;
    if (set.size() < 2 || st_.degenerate_repairs > 2 * (n_ + 1)) {
        // Rebuild around x_k from scratch.
        const Box* box = bounds_ ? &*bounds_ : nullptr;
        const int p = std::max(1, static_cast<int>(set.size()) - 1);
        const auto pts = build_initial_set(xk, st_.delta, std::min(p, prm_.p), box, rng_);
        InterpolationSet fresh(xk, set.base_value(), set.sample_count(set.base_index()));
        st_.set = fresh;
        st_.degenerate_repairs = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const Evaluation e = evaluate_impl(pts[i]);
            if (e.ok) st_.set.append(pts[i], e.r, e.n_samples);
        }
        return;
    }
    const std::size_t t = indices_by_distance(set, xk, true).front();
    const Vector d = random_orthogonal_direction(directions(t), rng_);
    Vector y = xk + st_.delta * d;
    if (bounds_ && !bounds_->contains(y)) {
        const Vector ym = xk - st_.delta * d;
        y = bounds_->contains(ym) ? ym : bounds_->clip(y);
    }
    if (set.contains_point(y)) return;
    const Evaluation e = evaluate_impl(y);
    if (e.ok) set.replace(t, y, e.r, e.n_samples);
}

void Solver::do_restart(RestartKind kind) {
    guarded([&] { restart_impl(kind); });
}

void Solver::restart_impl(RestartKind kind) {
    if (kind == RestartKind::off) return;
    if (st_.best_f < st_.best_at_last_restart)
        st_.unsuccessful_restarts = 0;
    else
        ++st_.unsuccessful_restarts;
    st_.best_at_last_restart = st_.best_f;
    if (st_.unsuccessful_restarts >= prm_.restarts.max_unsuccessful) throw Stop{ExitFlag::restarts_exhausted};

    ++st_.n_restarts;
    st_.delta = prm_.delta0;
    st_.rho = prm_.delta0;
    st_.restart_history = RestartHistory{};
    st_.success_history.clear();
    st_.last_jacobian.resize(0, 0);
    st_.iterations_since_restart = 0;

    auto& set = st_.set;
    const Box* box = bounds_ ? &*bounds_ : nullptr;
    const double D0 = prm_.delta0;

    if (kind == RestartKind::hard) {
        const Vector xk = set.base_point();
        const auto pts = build_initial_set(xk, D0, prm_.p, box, rng_);
        st_.set = InterpolationSet(xk, set.base_value(), set.sample_count(set.base_index()));
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const Evaluation e = evaluate_impl(pts[i]);
            if (e.ok) st_.set.append(pts[i], e.r, e.n_samples);
        }
        return;
    }

    const int N = std::min(prm_.restarts.soft_points, prm_.p);
    auto move_point = [&](std::size_t t, const Vector& center) -> bool {
        Vector y;
        try {
            const LagrangeBasis basis = lagrange_basis(set);
            y = geometry_point(basis, t, center, D0, box, &rng_);
        } catch (const DegenerateSetError&) {
            y = feasible_step(center + D0 * random_orthogonal_direction(Matrix(n_, 0), rng_));
        }
        if (set.contains_point(y)) return false;
        const Evaluation e = evaluate_impl(y);
        if (!e.ok) return false;
        set.replace(t, y, e.r, e.n_samples);
        return true;
    };

    if (kind == RestartKind::soft_fixed) {
        const Vector xk = set.base_point();
        const auto order = indices_by_distance(set, xk, false);
        for (int j = 0; j < N && j < static_cast<int>(order.size()); ++j) move_point(order[static_cast<std::size_t>(j)], xk);
        return;
    }

    // soft_moving: move x_k itself, then the N-1 points nearest the old x_k.
    const std::size_t base = set.base_index();
    const Vector old_xk = set.base_point();
    const auto order = indices_by_distance(set, old_xk, false);
    std::vector<std::size_t> moved;
    if (move_point(base, old_xk)) moved.push_back(base);
    set.set_base(base);
    const Vector center = set.base_point();
    for (int j = 0; j + 1 < N && j < static_cast<int>(order.size()); ++j) {
        const std::size_t t = order[static_cast<std::size_t>(j)];
        if (move_point(t, center)) moved.push_back(t);
        set.set_base(base);
    }
    if (!moved.empty()) {
        std::size_t best = moved.front();
        for (std::size_t t : moved)
            if (set.objective(t) < set.objective(best)) best = t;
        set.set_base(best);
    }
}

void Solver::multi_move_points(MultiMove mechanism, int count, const Vector& step) {
    guarded([&] { multi_move_impl(mechanism, count, step); });
}

void Solver::multi_move_impl(MultiMove mechanism, int count, const Vector& step) {
    if (mechanism == MultiMove::nothing) return;
    auto& set = st_.set;
    const Vector xk = set.base_point();
    const double delta = st_.delta;
    const Box* box = bounds_ ? &*bounds_ : nullptr;
    auto order = indices_by_distance(set, xk, true);
    if (static_cast<int>(order.size()) > count) order.resize(static_cast<std::size_t>(count));

    if (mechanism == MultiMove::geometry) {
        for (std::size_t t : order) {
            LagrangeBasis basis;
            try {
                basis = lagrange_basis(set);
            } catch (const DegenerateSetError&) {
                return;
            }
            const Vector y = geometry_point(basis, t, xk, delta, box, &rng_);
            if (set.contains_point(y)) continue;
            const Evaluation e = evaluate_impl(y);
            if (e.ok) set.replace(t, y, e.r, e.n_samples);
        }
        return;
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t t : order) {
        Vector d(n_);
        double ds = 0.0;
        do {
            for (int i = 0; i < n_; ++i) d(i) = normal(rng_);
            d.normalize();
            ds = d.dot(step);
        } while (ds == 0.0 && step.squaredNorm() > 0.0);
        if (ds < 0.0) d = -d;
        auto max_alpha = [&](const Vector& dir) {
            double a = delta;
            if (box) {
                for (int i = 0; i < n_; ++i) {
                    if (dir(i) > 0.0) a = std::min(a, (box->upper(i) - xk(i)) / dir(i));
                    else if (dir(i) < 0.0) a = std::min(a, (box->lower(i) - xk(i)) / dir(i));
                }
            }
            return std::max(a, 0.0);
        };
        double a = max_alpha(d);
        if (a < 1e-3) {
            d = -d;
            a = max_alpha(d);
        }
        if (a <= 0.0) continue;
        const Vector y = feasible_step(xk + a * d);
        if (set.contains_point(y)) continue;
        const Evaluation e = evaluate_impl(y);
        if (e.ok) set.replace(t, y, e.r, e.n_samples);
    }
}

}  // namespace dfols
