#include "dfols/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dfols {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Preconditioned system matrix: row t is [1, (y_t - x_k)' / alpha].
Matrix interpolation_matrix(const InterpolationSet& set, double* alpha_out) {
    const std::size_t P = set.size();
    const int n = set.dim();
    const Vector& xk = set.base_point();
    const double alpha = set.max_distance(xk);
    if (!(alpha > 0.0)) throw DegenerateSetError("degenerate interpolation set: all points coincide");
    Matrix W(static_cast<Eigen::Index>(P), n + 1);
    for (std::size_t t = 0; t < P; ++t) {
        W(static_cast<Eigen::Index>(t), 0) = 1.0;
        W.row(static_cast<Eigen::Index>(t)).tail(n) = (set.point(t) - xk).transpose() / alpha;
    }
    *alpha_out = alpha;
    return W;
}

bool is_feasible(const Vector& x, const Box* bounds) { return bounds == nullptr || bounds->contains(x); }

}  // namespace

Box Box::unbounded(int n) {
    return Box{Vector::Constant(n, -kInf), Vector::Constant(n, kInf)};
}

bool Box::contains(const Vector& x, double tol) const {
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x(i) < lower(i) - tol || x(i) > upper(i) + tol) return false;
    return true;
}

Vector Box::clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

bool Box::finite() const { return lower.allFinite() && upper.allFinite(); }

InterpolationSet::InterpolationSet(Vector x0, Vector r0, int n_samples) {
    objectives_.push_back(r0.squaredNorm());
    points_.push_back(std::move(x0));
    values_.push_back(std::move(r0));
    counts_.push_back(n_samples);
}

std::size_t InterpolationSet::append(Vector y, Vector r, int n_samples) {
    const double f = r.squaredNorm();
    points_.push_back(std::move(y));
    values_.push_back(std::move(r));
    objectives_.push_back(f);
    counts_.push_back(n_samples);
    const std::size_t t = points_.size() - 1;
    if (points_.size() == 1 || f < objectives_[base_]) base_ = t;
    return t;
}

void InterpolationSet::replace(std::size_t t, Vector y, Vector r, int n_samples) {
    if (t >= points_.size()) throw std::out_of_range("InterpolationSet::replace: bad index");
    const double f = r.squaredNorm();
    points_[t] = std::move(y);
    values_[t] = std::move(r);
    objectives_[t] = f;
    counts_[t] = n_samples;
    if (t == base_)
        base_ = index_of_min_objective();
    else if (f < objectives_[base_])
        base_ = t;
}

void InterpolationSet::set_base(std::size_t t) {
    if (t >= points_.size()) throw std::out_of_range("InterpolationSet::set_base: bad index");
    base_ = t;
}

bool InterpolationSet::contains_point(const Vector& y) const {
    return std::any_of(points_.begin(), points_.end(), [&](const Vector& p) { return p == y; });
}

std::size_t InterpolationSet::index_of_min_objective() const {
    return static_cast<std::size_t>(std::min_element(objectives_.begin(), objectives_.end()) -
                                    objectives_.begin());
}

double InterpolationSet::max_distance(const Vector& center) const {
    double d = 0.0;
    for (const auto& p : points_) d = std::max(d, (p - center).norm());
    return d;
}

InterpolationSet update_set(InterpolationSet set, const Vector& new_point, const Vector& new_value,
                            std::optional<std::size_t> replace_index, int n_samples) {
    if (set.contains_point(new_point)) throw std::invalid_argument("update_set: duplicate point");
    if (replace_index)
        set.replace(*replace_index, new_point, new_value, n_samples);
    else
        set.append(new_point, new_value, n_samples);
    return set;
}

std::vector<Vector> build_initial_set(const Vector& x0, double delta0, int p_init, const Box* bounds,
                                      Rng& rng) {
    const int n = static_cast<int>(x0.size());
    if (p_init < 1) throw std::invalid_argument("build_initial_set: p_init must be positive");
    if (!(delta0 > 0.0)) throw std::invalid_argument("build_initial_set: delta0 must be positive");
    if (bounds && !bounds->contains(x0)) throw std::invalid_argument("build_initial_set: x0 outside bounds");

    const auto q = random_orthonormal(n, n, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> sign_used(static_cast<std::size_t>(n), 1.0);
    std::vector<Vector> pts{x0};
    pts.reserve(static_cast<std::size_t>(p_init) + 1);

    for (int t = 0; t < p_init; ++t) {
        Vector d;
        bool may_flip = true;
        if (t < n) {
            d = q[static_cast<std::size_t>(t)];
        } else if (t < 2 * n) {
            d = -sign_used[static_cast<std::size_t>(t - n)] * q[static_cast<std::size_t>(t - n)];
            may_flip = false;
        } else {
            d.resize(n);
            for (int i = 0; i < n; ++i) d(i) = normal(rng);
            d.normalize();
        }
        Vector y = x0 + delta0 * d;
        if (!is_feasible(y, bounds) && may_flip && is_feasible(Vector(x0 - delta0 * d), bounds)) {
            d = -d;
            y = x0 + delta0 * d;
            if (t < n) sign_used[static_cast<std::size_t>(t)] = -1.0;
        }
        if (!is_feasible(y, bounds)) {
            // Both signs leave the box: take the longer of the two projected steps.
            Vector yp = bounds->clip(x0 + delta0 * d);
            Vector ym = bounds->clip(x0 - delta0 * d);
            y = ((yp - x0).norm() >= (ym - x0).norm() || !may_flip) ? yp : ym;
            if ((y - x0).norm() < 1e-3 * delta0) throw InfeasibleGeometryError();
        }
        pts.push_back(std::move(y));
    }

    Matrix D(n, p_init);
    for (int t = 0; t < p_init; ++t) D.col(t) = pts[static_cast<std::size_t>(t) + 1] - x0;
    if (numerical_rank(D) < std::min(n, p_init)) throw InfeasibleGeometryError();
    return pts;
}

LinearResidualModel build_linear_model(const InterpolationSet& set, bool repair_rank) {
    if (set.size() < 2) throw DegenerateSetError("degenerate interpolation set: fewer than two points");
    const int n = set.dim();
    const int p = static_cast<int>(set.size()) - 1;
    LinearResidualModel lm;
    const Matrix W = interpolation_matrix(set, &lm.alpha);
    Matrix B(W.rows(), set.n_residuals());
    for (std::size_t t = 0; t < set.size(); ++t) B.row(static_cast<Eigen::Index>(t)) = set.value(t).transpose();

    const Matrix Z = (p >= n) ? solve_regression(W, B) : solve_min_norm(W, B);
    lm.center = set.base_point();
    lm.r = Z.row(0).transpose();
    lm.J = Z.bottomRows(n).transpose() / lm.alpha;
    if (p < n && repair_rank) {
        lm.J = clamp_singular_values(lm.J, p, &lm.repair_fallback);
        lm.rank_repaired = true;
    }
    return lm;
}

double FullModel::value(const Vector& s) const { return c + g.dot(s) + 0.5 * s.dot(H * s); }

double FullModel::decrease(const Vector& s) const { return -(g.dot(s) + 0.5 * s.dot(H * s)); }

FullModel full_model(const LinearResidualModel& lm) {
    FullModel fm;
    fm.c = lm.r.squaredNorm();
    fm.g = 2.0 * lm.J.transpose() * lm.r;
    fm.H = 2.0 * lm.J.transpose() * lm.J;
    return fm;
}

double LagrangeBasis::value(std::size_t t, const Vector& y) const {
    return c(static_cast<Eigen::Index>(t)) + g.col(static_cast<Eigen::Index>(t)).dot(y - center);
}

Vector LagrangeBasis::values(const Vector& y) const { return c + g.transpose() * (y - center); }

LagrangeBasis lagrange_basis(const InterpolationSet& set) {
    const int n = set.dim();
    if (static_cast<int>(set.size()) < n + 1)
        throw std::invalid_argument("lagrange_basis: needs at least n+1 points");
    double alpha = 0.0;
    const Matrix W = interpolation_matrix(set, &alpha);
    const Matrix Z = solve_regression(W, Matrix::Identity(W.rows(), W.rows()));
    LagrangeBasis basis;
    basis.center = set.base_point();
    basis.c = Z.row(0).transpose();
    basis.g = Z.bottomRows(n) / alpha;
    return basis;
}

double poisedness_estimate(const InterpolationSet& set, const Vector& center, double delta) {
    LagrangeBasis basis;
    try {
        basis = lagrange_basis(set);
    } catch (const DegenerateSetError&) {
        return kInf;
    }
    double lam = 0.0;
    for (std::size_t t = 0; t < basis.size(); ++t)
        lam = std::max(lam, std::abs(basis.value(t, center)) +
                                delta * basis.g.col(static_cast<Eigen::Index>(t)).norm());
    return lam;
}

Vector maximize_linear_in_ball_box(const Vector& d, const Vector& center, double delta, const Box* bounds) {
    const double dn = d.norm();
    if (bounds == nullptr) return center + (delta / dn) * d;

    const Eigen::Index n = d.size();
    // Breakpoints where components of center + tau d reach the box.
    std::vector<std::pair<double, Eigen::Index>> breaks;
    double G = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (d(i) == 0.0) continue;
        G += d(i) * d(i);
        const double b = d(i) > 0.0 ? bounds->upper(i) : bounds->lower(i);
        const double tau = (b - center(i)) / d(i);
        if (std::isfinite(tau)) breaks.emplace_back(std::max(tau, 0.0), i);
    }
    std::sort(breaks.begin(), breaks.end());
    const double d2 = delta * delta;
    double F = 0.0;
    double tau = kInf;
    Vector y = center;
    std::vector<bool> fixed(static_cast<std::size_t>(n), false);
    std::size_t k = 0;
    while (true) {
        const double next = k < breaks.size() ? breaks[k].first : kInf;
        if (G > 0.0 && (next == kInf || F + next * next * G >= d2)) {
            tau = std::sqrt(std::max(d2 - F, 0.0) / G);
            break;
        }
        if (k >= breaks.size()) break;  // all moving components fixed, ball not reached
        const Eigen::Index i = breaks[k].second;
        const double b = d(i) > 0.0 ? bounds->upper(i) : bounds->lower(i);
        F += (b - center(i)) * (b - center(i));
        G -= d(i) * d(i);
        if (G < 0.0) G = 0.0;
        fixed[static_cast<std::size_t>(i)] = true;
        ++k;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (d(i) == 0.0) continue;
        if (fixed[static_cast<std::size_t>(i)])
            y(i) = d(i) > 0.0 ? bounds->upper(i) : bounds->lower(i);
        else
            y(i) = center(i) + tau * d(i);
    }
    return bounds->clip(y);
}

Vector geometry_point(const LagrangeBasis& basis, std::size_t t, const Vector& center, double delta,
                      const Box* bounds, Rng* rng, bool* random_fallback) {
    if (random_fallback) *random_fallback = false;
    const Vector gt = basis.g.col(static_cast<Eigen::Index>(t));
    if (gt.norm() == 0.0 || !gt.allFinite()) {
        if (random_fallback) *random_fallback = true;
        Rng local(0x9e3779b97f4a7c15ULL);
        Rng& r = rng ? *rng : local;
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector u(center.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = normal(r);
        Vector y = center + (delta / u.norm()) * u;
        return bounds ? bounds->clip(y) : y;
    }
    const Vector yp = maximize_linear_in_ball_box(gt, center, delta, bounds);
    const Vector ym = maximize_linear_in_ball_box(-gt, center, delta, bounds);
    return std::abs(basis.value(t, yp)) >= std::abs(basis.value(t, ym)) ? yp : ym;
}

bool needs_geometry_improvement(const InterpolationSet& set, const Vector& center, double epsilon) {
    return set.max_distance(center) > epsilon;
}

std::size_t choose_point_to_replace(const InterpolationSet& set, const LagrangeBasis& basis,
                                    const Vector& new_point, const Vector& center, double delta,
                                    double power) {
    if (set.size() < 2) throw std::invalid_argument("choose_point_to_replace: nothing to replace");
    const Vector lag = basis.values(new_point);
    std::size_t best = set.size();
    double best_score = -1.0;
    for (std::size_t t = 0; t < set.size(); ++t) {
        if (t == set.base_index()) continue;
        const double dist = (set.point(t) - center).norm() / delta;
        const double score = std::abs(lag(static_cast<Eigen::Index>(t))) * std::max(std::pow(dist, power), 1.0);
        if (score > best_score) {
            best_score = score;
            best = t;
        }
    }
    return best;
}

}  // namespace dfols
