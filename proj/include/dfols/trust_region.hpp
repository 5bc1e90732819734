#pragma once

#include "dfols/model.hpp"

namespace dfols {

struct TrustRegionStep {
    Vector s;
    double decrease = 0.0;  // m(0) - m(s)
    bool used_cauchy = false;
    int cg_iterations = 0;
};

// Approximate minimizer of m(s) over |s| <= delta, lower <= s <= upper (projected truncated CG,
// at most 2n iterations); never returns less decrease than cauchy_point.
TrustRegionStep solve_trust_region(const FullModel& model, double delta, const Vector& lower,
                                   const Vector& upper);

// Exact minimizer of m along the projected steepest-descent line, truncated by ball and box.
TrustRegionStep cauchy_point(const FullModel& model, double delta, const Vector& lower, const Vector& upper);

// Largest eigenvalue magnitude of a symmetric matrix.
double spectral_norm_symmetric(const Matrix& H);

// Gradient with components blocked by an active bound at s = 0 removed.
Vector projected_gradient(const Vector& g, const Vector& lower, const Vector& upper);

// 0.5 |g_f| min(delta_f, |g_f| / max(|H|, 1)), g_f the projected gradient and delta_f the length
// of the feasible segment along -g_f (capped at delta). Reduces to the plain bound without bounds.
double cauchy_decrease_bound(const FullModel& model, double delta, const Vector& lower, const Vector& upper);

// Checks m(0) - m(s) >= bound - slack; the eigenvalue solve is skipped when a cheap lower bound
// on |H| already settles it.
bool satisfies_cauchy_decrease(const FullModel& model, double delta, const Vector& lower, const Vector& upper,
                               const Vector& s, double slack = 1e-12);

}  // namespace dfols
