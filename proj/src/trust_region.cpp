#include "dfols/trust_region.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

namespace dfols {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest t >= 0 with s + t d inside the box; index of the blocking component (or -1).
double box_step(const Vector& s, const Vector& d, const Vector& lower, const Vector& upper, Eigen::Index* hit) {
    double t = kInf;
    *hit = -1;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        double ti = kInf;
        if (d(i) > 0.0)
            ti = (upper(i) - s(i)) / d(i);
        else if (d(i) < 0.0)
            ti = (lower(i) - s(i)) / d(i);
        if (ti < t) {
            t = std::max(ti, 0.0);
            *hit = i;
        }
    }
    return t;
}

// Largest t >= 0 with |s + t d| <= delta.
double ball_step(const Vector& s, const Vector& d, double delta) {
    const double dd = d.squaredNorm();
    if (dd == 0.0) return kInf;
    const double sd = s.dot(d);
    const double rem = std::max(delta * delta - s.squaredNorm(), 0.0);
    const double disc = std::sqrt(sd * sd + dd * rem);
    // Stable root of dd t^2 + 2 sd t - rem = 0.
    return sd > 0.0 ? rem / (sd + disc) : (disc - sd) / dd;
}

double bound_with_norm(double gnorm, double delta_f, double hnorm) {
    return 0.5 * gnorm * std::min(delta_f, gnorm / std::max(hnorm, 1.0));
}

using hp = boost::multiprecision::cpp_bin_float_50;

hp hp_decrease(const FullModel& model, const Vector& s) {
    const Eigen::Index n = s.size();
    hp gs = 0, shs = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        gs += hp(model.g(i)) * s(i);
        hp hs = 0;
        for (Eigen::Index j = 0; j < n; ++j) hs += hp(model.H(i, j)) * s(j);
        shs += hp(s(i)) * hs;
    }
    return -(gs + shs / 2);
}

// Largest eigenvalue magnitude: the double-precision eigenvector refined by a few power
// iterations, then its Rayleigh quotient, all in extended precision.
hp hp_spectral_norm(const Matrix& H) {
    const Eigen::Index n = H.rows();
    if (n == 1) return abs(hp(H(0, 0)));
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    const Eigen::Index top = es.eigenvalues().cwiseAbs().maxCoeff() == std::abs(es.eigenvalues()(0)) ? 0 : n - 1;
    std::vector<hp> v(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = es.eigenvectors()(i, top);
    auto apply = [&]() {
        for (Eigen::Index i = 0; i < n; ++i) {
            hp acc = 0;
            for (Eigen::Index j = 0; j < n; ++j) acc += hp(H(i, j)) * v[static_cast<std::size_t>(j)];
            w[static_cast<std::size_t>(i)] = acc;
        }
    };
    for (int k = 0; k < 3; ++k) {
        apply();
        hp nn = 0;
        for (const hp& x : w) nn += x * x;
        nn = sqrt(nn);
        if (nn == 0) return 0;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / nn;
    }
    apply();
    hp num = 0, den = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        num += v[i] * w[i];
        den += v[i] * v[i];
    }
    return abs(num / den);
}

// Right-hand side of the Cauchy inequality in extended precision.
hp hp_cauchy_bound(const FullModel& model, double delta, const Vector& lower, const Vector& upper) {
    const Vector gf = projected_gradient(model.g, lower, upper);
    hp gg = 0;
    for (Eigen::Index i = 0; i < gf.size(); ++i) gg += hp(gf(i)) * gf(i);
    if (gg == 0) return 0;
    const hp gnorm = sqrt(gg);
    hp t_box = -1;
    for (Eigen::Index i = 0; i < gf.size(); ++i) {
        hp ti = -1;
        if (gf(i) < 0.0 && std::isfinite(upper(i)))
            ti = hp(upper(i)) / -gf(i);
        else if (gf(i) > 0.0 && std::isfinite(lower(i)))
            ti = hp(lower(i)) / -gf(i);
        if (ti >= 0 && (t_box < 0 || ti < t_box)) t_box = ti;
    }
    hp delta_f = delta;
    if (t_box >= 0 && t_box * gnorm < delta_f) delta_f = t_box * gnorm;
    hp h = hp_spectral_norm(model.H);
    if (h < 1) h = 1;
    const hp ratio = gnorm / h;
    return gnorm * (delta_f < ratio ? delta_f : ratio) / 2;
}

// Projected gradient norm and the feasible length along -g_f.
void cauchy_geometry(const FullModel& model, double delta, const Vector& lower, const Vector& upper,
                     double* gnorm, double* delta_f) {
    const Vector gf = projected_gradient(model.g, lower, upper);
    *gnorm = gf.norm();
    *delta_f = delta;
    if (*gnorm == 0.0) return;
    Eigen::Index hit;
    const double tb = box_step(Vector::Zero(gf.size()), -gf, lower, upper, &hit);
    *delta_f = std::min(delta, tb * (*gnorm));
}

}  // namespace

Vector projected_gradient(const Vector& g, const Vector& lower, const Vector& upper) {
    Vector gf = g;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if ((g(i) > 0.0 && lower(i) >= 0.0) || (g(i) < 0.0 && upper(i) <= 0.0)) gf(i) = 0.0;
    return gf;
}

double spectral_norm_symmetric(const Matrix& H) {
    if (H.size() == 0) return 0.0;
    if (H.rows() == 1) return std::abs(H(0, 0));
    Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double cauchy_decrease_bound(const FullModel& model, double delta, const Vector& lower, const Vector& upper) {
    double gnorm = 0.0, delta_f = 0.0;
    cauchy_geometry(model, delta, lower, upper, &gnorm, &delta_f);
    if (gnorm == 0.0) return 0.0;
    return bound_with_norm(gnorm, delta_f, spectral_norm_symmetric(model.H));
}

bool satisfies_cauchy_decrease(const FullModel& model, double delta, const Vector& lower, const Vector& upper,
                               const Vector& s, double slack) {
    const Vector gf = projected_gradient(model.g, lower, upper);
    const double gnorm = gf.stableNorm();
    const double gs = model.g.dot(s);
    const double shs = s.dot(model.H * s);
    const double dec = -(gs + 0.5 * shs);
    if (gnorm == 0.0) return hp_decrease(model, s) >= -slack;
    Eigen::Index hit;
    const double delta_f = std::min(delta, box_step(Vector::Zero(gf.size()), -gf, lower, upper, &hit) * gnorm);

    // Fast path in double with a margin well above rounding; cheap bounds on |H| bracket the bound.
    const Eigen::Index n = model.H.rows();
    const double hf = model.H.stableNorm();
    const double h_lo = std::max(model.H.diagonal().cwiseAbs().maxCoeff(), hf / std::sqrt(static_cast<double>(n)));
    const double b_max = bound_with_norm(gnorm, delta_f, h_lo);
    const double b_min = bound_with_norm(gnorm, delta_f, hf);
    // Rounding in dec is bounded relative to |g||s| + |H||s|^2, not to dec itself.
    const double sn = s.stableNorm();
    const double margin = 1e-10 * (model.g.stableNorm() * sn + hf * sn * sn + std::abs(b_max));
    if (std::isfinite(margin) && dec - b_max > margin) return true;
    if (std::isfinite(margin) && dec - b_min < -margin - slack) return false;

    // Near a tie: decide in extended precision.
    return hp_decrease(model, s) >= hp_cauchy_bound(model, delta, lower, upper) - slack;
}

TrustRegionStep cauchy_point(const FullModel& model, double delta, const Vector& lower, const Vector& upper) {
    const Eigen::Index n = model.g.size();
    TrustRegionStep out;
    out.s = Vector::Zero(n);
    out.used_cauchy = true;
    const Vector d = -projected_gradient(model.g, lower, upper);
    const double gg = d.squaredNorm();
    if (gg == 0.0) return out;
    Eigen::Index hit;
    const double t_max = std::min(ball_step(out.s, d, delta), box_step(out.s, d, lower, upper, &hit));
    const double dhd = d.dot(model.H * d);
    const double t = dhd > 0.0 ? std::min(t_max, gg / dhd) : t_max;
    out.s = t * d;
    out.s = out.s.cwiseMax(lower).cwiseMin(upper);
    out.decrease = model.decrease(out.s);
    return out;
}

namespace {

// The minimizer is unchanged by positive scaling of (g, H); a power of two keeps the scaling
// exact and prevents overflow in curvature products for huge models.
FullModel overflow_safe(const FullModel& model) {
    FullModel scaled = model;
    const double mag = std::max(model.g.cwiseAbs().maxCoeff(), model.H.cwiseAbs().maxCoeff());
    if (mag > 0x1p100) {
        const double f = std::ldexp(1.0, -std::ilogb(mag));
        scaled.c *= f;
        scaled.g *= f;
        scaled.H *= f;
    }
    return scaled;
}

// Projected truncated CG from s; a component hitting a bound is fixed and CG restarts on the
// remaining free variables. Stops when |g_free|^2 <= rel_tol |g_free(s)|^2.
Vector projected_cg(const FullModel& model, double delta, const Vector& lower, const Vector& upper, Vector s,
                    double rel_tol, int max_iter, int* iterations) {
    const Eigen::Index n = model.g.size();
    std::vector<bool> fixed(static_cast<std::size_t>(n), false);
    Vector grad = model.g + model.H * s;  // gradient of m at s
    for (Eigen::Index i = 0; i < n; ++i)
        if ((grad(i) > 0.0 && s(i) <= lower(i)) || (grad(i) < 0.0 && s(i) >= upper(i)))
            fixed[static_cast<std::size_t>(i)] = true;

    auto free_part = [&](const Vector& v) {
        Vector w = v;
        for (Eigen::Index i = 0; i < n; ++i)
            if (fixed[static_cast<std::size_t>(i)]) w(i) = 0.0;
        return w;
    };

    Vector gfree = free_part(grad);
    Vector d = -gfree;
    double gg = gfree.squaredNorm();
    const double gg0 = gg;
    int it = 0;

    while (it < max_iter && gg > rel_tol * gg0 && d.squaredNorm() > 0.0) {
        ++it;
        const Vector Hd = model.H * d;
        const double dhd = d.dot(Hd);
        const double t_ball = ball_step(s, d, delta);
        Eigen::Index hit;
        const double t_box = box_step(s, d, lower, upper, &hit);
        const double t_cg = dhd > 0.0 ? -grad.dot(d) / dhd : kInf;
        const double t = std::min({t_cg, t_ball, t_box});
        if (!(t > 0.0) || !std::isfinite(t)) {
            if (t_box <= 0.0 && hit >= 0) {
                fixed[static_cast<std::size_t>(hit)] = true;
                gfree = free_part(grad);
                gg = gfree.squaredNorm();
                d = -gfree;
                continue;
            }
            break;
        }
        s += t * d;
        grad += t * Hd;
        if (t == t_ball) break;
        if (t == t_box && t < t_cg) {
            fixed[static_cast<std::size_t>(hit)] = true;
            s(hit) = d(hit) > 0.0 ? upper(hit) : lower(hit);
            gfree = free_part(grad);
            gg = gfree.squaredNorm();
            d = -gfree;  // restart CG on the reduced space
            continue;
        }
        const Vector gnew = free_part(grad);
        const double gg_new = gnew.squaredNorm();
        d = -gnew + (gg_new / gg) * d;
        gfree = gnew;
        gg = gg_new;
    }

    s = s.cwiseMax(lower).cwiseMin(upper);
    const double sn = s.norm();
    if (sn > delta) s *= delta / sn;
    *iterations = it;
    return s;
}

// Cauchy step with the line-search length computed in extended precision.
Vector hp_cauchy_step(const FullModel& model, double delta, const Vector& lower, const Vector& upper) {
    const Vector d = -projected_gradient(model.g, lower, upper);
    const Eigen::Index n = d.size();
    hp gg = 0, dhd = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        gg += hp(d(i)) * d(i);
        hp hd = 0;
        for (Eigen::Index j = 0; j < n; ++j) hd += hp(model.H(i, j)) * d(j);
        dhd += hp(d(i)) * hd;
    }
    if (gg == 0) return Vector::Zero(n);
    Eigen::Index hit;
    const double t_max = std::min(ball_step(Vector::Zero(n), d, delta), box_step(Vector::Zero(n), d, lower, upper, &hit));
    hp t = t_max;
    if (dhd > 0 && gg / dhd < t) t = gg / dhd;
    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = static_cast<double>(t * d(i));
    return s.cwiseMax(lower).cwiseMin(upper);
}

// Eigenvectors of a symmetric matrix by cyclic Jacobi rotations in extended precision, which
// resolves eigenvalues far below eps |H|.
Matrix hp_eigenvectors(const Matrix& Hd) {
    using HpMatrix = Eigen::Matrix<hp, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Index n = Hd.rows();
    HpMatrix A = Hd.cast<hp>();
    HpMatrix V = HpMatrix::Identity(n, n);
    for (int sweep = 0; sweep < 30; ++sweep) {
        hp off = 0, diag = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            diag += A(i, i) * A(i, i);
            for (Eigen::Index j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        }
        if (off <= diag * 1e-90) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (A(p, q) == 0) continue;
                const hp theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
                const hp t = (theta >= 0 ? hp(1) : hp(-1)) / (abs(theta) + sqrt(theta * theta + 1));
                const hp c = 1 / sqrt(t * t + 1), sn = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const hp akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - sn * akq;
                    A(k, q) = sn * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const hp apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - sn * aqk;
                    A(q, k) = sn * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const hp vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - sn * vkq;
                    V(k, q) = sn * vkp + c * vkq;
                }
            }
    }
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = static_cast<double>(V(i, j));
    return out;
}

// Stationary point of the model solved in extended precision, pulled back into the region.
Vector hp_newton_step(const FullModel& model, double delta, const Vector& lower, const Vector& upper) {
    using HpMatrix = Eigen::Matrix<hp, Eigen::Dynamic, Eigen::Dynamic>;
    using HpVector = Eigen::Matrix<hp, Eigen::Dynamic, 1>;
    const HpMatrix H = model.H.cast<hp>();
    const HpVector g = model.g.cast<hp>();
    const HpVector x = H.fullPivLu().solve(HpVector(-g));
    Vector s(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) s(i) = static_cast<double>(x(i));
    if (!s.allFinite()) return Vector::Zero(s.size());
    const double sn = s.norm();
    if (sn > delta) s *= delta / sn;
    return s.cwiseMax(lower).cwiseMin(upper);
}

// Used when rounding leaves the step just short of the Cauchy bound (a near tie): tries
// continued CG, the extended-precision Cauchy and Newton steps, eigenvector walks and
// ulp-level rescalings, keeping the one with the largest decrease among those that pass.
bool repair_step(const FullModel& model, double delta, const Vector& lower, const Vector& upper, double slack,
                 Vector* s) {
    std::vector<Vector> candidates;
    int it = 0;
    candidates.push_back(projected_cg(overflow_safe(model), delta, lower, upper, *s, 0.0, 2 * static_cast<int>(s->size()), &it));
    candidates.push_back(hp_cauchy_step(model, delta, lower, upper));
    candidates.push_back(hp_newton_step(model, delta, lower, upper));
    // Eigenvalues far below eps |H| are invisible to a double eigensolver, yet a negative one
    // gives unbounded decrease; walk each extended-precision eigenvector to the boundary.
    {
        const Matrix V = hp_eigenvectors(model.H);
        const Vector s0 = *s;
        for (Eigen::Index k = 0; k < V.cols(); ++k)
            for (double sign : {1.0, -1.0}) {
                const Vector u = sign * V.col(k);
                Eigen::Index hit;
                const double t = std::min(ball_step(s0, u, delta) * (1.0 - 1e-12), box_step(s0, u, lower, upper, &hit));
                if (std::isfinite(t) && t > 0.0) candidates.push_back(s0 + t * u);
            }
    }
    const std::size_t base = candidates.size();
    for (std::size_t c = 0; c < base; ++c)
        for (int k = -4; k <= 4; ++k) {
            if (k == 0) continue;
            Vector v = candidates[c] * (1.0 + k * std::numeric_limits<double>::epsilon());
            const double vn = v.norm();
            if (vn > delta) v *= delta / vn;
            candidates.push_back(v.cwiseMax(lower).cwiseMin(upper));
        }
    const hp bound = hp_cauchy_bound(model, delta, lower, upper) - slack;
    bool found = false;
    hp best = 0;
    for (const Vector& v : candidates) {
        if (!v.allFinite() || v.norm() > delta) continue;
        const hp dec = hp_decrease(model, v);
        if (dec >= bound && (!found || dec > best)) {
            found = true;
            best = dec;
            *s = v;
        }
    }
    return found;
}

}  // namespace

TrustRegionStep solve_trust_region(const FullModel& model, double delta, const Vector& lower,
                                   const Vector& upper) {
    const Eigen::Index n = model.g.size();
    TrustRegionStep out;
    out.s = Vector::Zero(n);
    if (model.g.squaredNorm() == 0.0) return out;

    const FullModel scaled = overflow_safe(model);

    int it = 0;
    out.s = projected_cg(scaled, delta, lower, upper, Vector::Zero(n), 1e-30, 2 * static_cast<int>(n), &it);
    out.decrease = model.decrease(out.s);
    out.cg_iterations = it;

    const TrustRegionStep cp = cauchy_point(scaled, delta, lower, upper);
    const double cp_decrease = model.decrease(cp.s);
    if (!(out.decrease >= cp_decrease)) {
        out.s = cp.s;
        out.decrease = cp_decrease;
        out.used_cauchy = true;
    }
    if (!satisfies_cauchy_decrease(model, delta, lower, upper, out.s) &&
        repair_step(model, delta, lower, upper, 1e-12, &out.s))
        out.decrease = model.decrease(out.s);
    return out;
}

}  // namespace dfols
