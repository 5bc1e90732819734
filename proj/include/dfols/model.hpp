#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dfols/numerics.hpp"

namespace dfols {

// Box constraints lower <= x <= upper (entries may be infinite).
struct Box {
    Vector lower;
    Vector upper;

    static Box unbounded(int n);
    bool contains(const Vector& x, double tol = 0.0) const;
    Vector clip(const Vector& x) const;
    bool finite() const;
};

class InfeasibleGeometryError : public std::runtime_error {
public:
    explicit InfeasibleGeometryError(const std::string& what = "infeasible initial geometry")
        : std::runtime_error(what) {}
};

// The point set Y_k with residual values, per-point sample counts and the base point x_k.
class InterpolationSet {
public:
    InterpolationSet() = default;
    InterpolationSet(Vector x0, Vector r0, int n_samples = 1);

    std::size_t size() const { return points_.size(); }
    int dim() const { return points_.empty() ? 0 : static_cast<int>(points_.front().size()); }
    int n_residuals() const { return values_.empty() ? 0 : static_cast<int>(values_.front().size()); }

    const Vector& point(std::size_t t) const { return points_[t]; }
    const Vector& value(std::size_t t) const { return values_[t]; }
    double objective(std::size_t t) const { return objectives_[t]; }
    int sample_count(std::size_t t) const { return counts_[t]; }
    const std::vector<Vector>& points() const { return points_; }

    std::size_t base_index() const { return base_; }
    const Vector& base_point() const { return points_[base_]; }
    const Vector& base_value() const { return values_[base_]; }
    double base_objective() const { return objectives_[base_]; }

    // Add a point; the base moves to it when its objective is lower. Returns its index.
    std::size_t append(Vector y, Vector r, int n_samples = 1);
    // Overwrite point t; the base moves to it when its objective is lower than the base's.
    void replace(std::size_t t, Vector y, Vector r, int n_samples = 1);
    // Force the base index (used by restarts that move x_k).
    void set_base(std::size_t t);

    bool contains_point(const Vector& y) const;
    std::size_t index_of_min_objective() const;
    double max_distance(const Vector& center) const;

private:
    std::vector<Vector> points_;
    std::vector<Vector> values_;
    std::vector<double> objectives_;
    std::vector<int> counts_;
    std::size_t base_ = 0;
};

// Append (replace_index empty) or replace. Duplicate points are rejected.
InterpolationSet update_set(InterpolationSet set, const Vector& new_point, const Vector& new_value,
                            std::optional<std::size_t> replace_index, int n_samples = 1);

// Initial points: x0 first, then p_init points at distance delta0 along random orthonormal
// directions (+q_t, then -q_t beyond n, then random unit directions beyond 2n).
std::vector<Vector> build_initial_set(const Vector& x0, double delta0, int p_init, const Box* bounds,
                                      Rng& rng);

struct LinearResidualModel {
    Vector center;
    Vector r;
    Matrix J;
    double alpha = 0.0;
    bool rank_repaired = false;
    bool repair_fallback = false;
};

// Interpolation (p = n), regression (p > n) or min-norm (p < n) residual model around the
// base point. With repair_rank the min-norm Jacobian gets its missing singular values.
LinearResidualModel build_linear_model(const InterpolationSet& set, bool repair_rank = true);

// m(s) = c + g's + s'Hs/2 with c = |r|^2, g = 2J'r, H = 2J'J.
struct FullModel {
    double c = 0.0;
    Vector g;
    Matrix H;

    double value(const Vector& s) const;
    // m(0) - m(s), computed without forming m(s).
    double decrease(const Vector& s) const;
};

FullModel full_model(const LinearResidualModel& lm);

// Linear regression Lagrange polynomials L_t(y) = c_t + g_t'(y - center).
struct LagrangeBasis {
    Vector center;
    Vector c;
    Matrix g;  // n x (p+1), column t is g_t

    std::size_t size() const { return static_cast<std::size_t>(c.size()); }
    double value(std::size_t t, const Vector& y) const;
    Vector values(const Vector& y) const;
};

LagrangeBasis lagrange_basis(const InterpolationSet& set);

// max_t (|L_t(center)| + delta |g_t|); +infinity for a degenerate set.
double poisedness_estimate(const InterpolationSet& set, const Vector& center, double delta);

// argmax of |L_t| over the ball B(center, delta), intersected with the box when given.
// Falls back to a random point on the sphere when g_t = 0 (sets *random_fallback).
Vector geometry_point(const LagrangeBasis& basis, std::size_t t, const Vector& center, double delta,
                      const Box* bounds, Rng* rng = nullptr, bool* random_fallback = nullptr);

// Maximizer of d'(y - center) over ball ∩ box (exact; path y = clip(center + tau d)).
Vector maximize_linear_in_ball_box(const Vector& d, const Vector& center, double delta, const Box* bounds);

bool needs_geometry_improvement(const InterpolationSet& set, const Vector& center, double epsilon);

// argmax over t != base of |L_t(new_point)| * max(|y_t - center|^power / delta^power, 1).
std::size_t choose_point_to_replace(const InterpolationSet& set, const LagrangeBasis& basis,
                                    const Vector& new_point, const Vector& center, double delta,
                                    double power = 4.0);

}  // namespace dfols
