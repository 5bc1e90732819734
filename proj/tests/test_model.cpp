#include <cmath>
#include <random>

#include "doctest.h"

#include "dfols/model.hpp"
#include "oracles/linalg.hpp"

using namespace dfols;

namespace {

Matrix gaussian(int r, int c, Rng& rng) {
    std::normal_distribution<double> N;
    Matrix A(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) A(i, j) = N(rng);
    return A;
}

// Set for affine residuals r(y) = A y + b at x and x + h d_t for random directions.
InterpolationSet affine_set(const Matrix& A, const Vector& b, const Vector& x, int p, double h, Rng& rng) {
    InterpolationSet set(x, A * x + b);
    const Matrix D = gaussian(static_cast<int>(x.size()), p, rng);
    for (int t = 0; t < p; ++t) {
        const Vector y = x + h * D.col(t).normalized();
        set.append(y, A * y + b);
    }
    return set;
}

// Largest |L_t| over a grid on the disc of radius delta around center (2-D only).
double grid_max_lagrange(const LagrangeBasis& basis, std::size_t t, const Vector& center, double delta,
                         const Box* box, Vector* arg = nullptr) {
    double best = -1.0;
    const int K = 801;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            Vector y(2);
            y << center(0) + delta * (2.0 * i / (K - 1) - 1.0), center(1) + delta * (2.0 * j / (K - 1) - 1.0);
            if ((y - center).norm() > delta) continue;
            if (box && !box->contains(y)) continue;
            const double v = std::abs(basis.value(t, y));
            if (v > best) {
                best = v;
                if (arg) *arg = y;
            }
        }
    return best;
}

}  // namespace

TEST_CASE("build_initial_set: p_init = n gives affinely independent points at distance delta0") {
    Rng rng(1);
    const Vector x0 = Vector::Constant(2, 0.3);
    const auto pts = build_initial_set(x0, 0.1, 2, nullptr, rng);
    REQUIRE(pts.size() == 3);
    CHECK(pts[0] == x0);
    Matrix D(2, 2);
    for (int t = 0; t < 2; ++t) {
        CHECK(std::abs((pts[static_cast<std::size_t>(t) + 1] - x0).norm() - 0.1) < 1e-14);
        D.col(t) = pts[static_cast<std::size_t>(t) + 1] - x0;
    }
    CHECK(oracle::rank(D) == 2);
}

TEST_CASE("build_initial_set: reduced initialization with p_init = 1 uses two points") {
    Rng rng(2);
    const auto pts = build_initial_set(Vector::Zero(2), 1.0, 1, nullptr, rng);
    CHECK(pts.size() == 2);
}

TEST_CASE("build_initial_set: direction flipped when the bound blocks it") {
    // x0 sits on the lower bound of every coordinate: only nonnegative moves are feasible.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Vector x0 = Vector::Zero(1);
        const Box box{Vector::Zero(1), Vector::Constant(1, 10.0)};
        const auto pts = build_initial_set(x0, 0.5, 1, &box, rng);
        CHECK(pts[1](0) == doctest::Approx(0.5));
    }
}

TEST_CASE("build_linear_model: affine residuals are recovered exactly") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4, m = 6;
        const Matrix A = gaussian(m, n, rng);
        const Vector b = gaussian(m, 1, rng);
        const Vector x = gaussian(n, 1, rng);
        const LinearResidualModel lm = build_linear_model(affine_set(A, b, x, n, 0.1, rng));
        const Vector rk = A * lm.center + b;
        CHECK((lm.r - rk).norm() <= 1e-9 * rk.norm());
        CHECK((lm.J - A).norm() <= 1e-9 * A.norm());
    }
}

TEST_CASE("build_linear_model: min-norm Jacobian has rank p before repair, n after") {
    InterpolationSet set(Vector::Zero(2), Vector::Zero(1));
    Vector y(2);
    y << 1.0, 0.0;
    set.append(y, Vector::Ones(1));
    // The base is the lower-value point.
    CHECK(set.base_index() == 0);
    const LinearResidualModel raw = build_linear_model(set, false);
    CHECK(oracle::rank(raw.J) == 1);
    CHECK(std::abs(raw.J(0, 0) - 1.0) < 1e-14);
    CHECK(std::abs(raw.J(0, 1)) < 1e-14);

    // With m >= n the repair can lift the rank to n with equal singular values.
    InterpolationSet set2(Vector::Zero(2), Vector::Zero(2));
    Vector v(2);
    v << 1.0, 2.0;
    set2.append(y, v);
    const LinearResidualModel before = build_linear_model(set2, false);
    const LinearResidualModel after = build_linear_model(set2, true);
    CHECK(oracle::rank(before.J) == 1);
    CHECK(oracle::rank(after.J) == 2);
    const Vector s = oracle::singular_values(after.J);
    CHECK(std::abs(s(0) - s(1)) < 1e-12 * s(0));
    CHECK(after.rank_repaired);
}

TEST_CASE("build_linear_model: regression with 5(n+1) points beats interpolation under noise") {
    const int n = 3, m = 4, trials = 100;
    double err_interp = 0.0, err_regr = 0.0;
    for (int seed = 0; seed < trials; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 1000);
        std::normal_distribution<double> N(0.0, 1e-2);
        const Matrix A = gaussian(m, n, rng);
        const Vector b = gaussian(m, 1, rng);
        const Vector x = Vector::Zero(n);
        auto noisy = [&](const Vector& y) {
            Vector r = A * y + b;
            for (int i = 0; i < m; ++i) r(i) += N(rng);
            return r;
        };
        const Matrix D = gaussian(n, 5 * (n + 1) - 1, rng);
        InterpolationSet small(x, noisy(x)), large(x, noisy(x));
        large = small;
        for (int t = 0; t < 5 * (n + 1) - 1; ++t) {
            const Vector y = x + 0.5 * D.col(t).normalized();
            const Vector r = noisy(y);
            if (t < n) small.append(y, r);
            large.append(y, r);
        }
        // Keep the base at x for both so only the number of points differs.
        small.set_base(0);
        large.set_base(0);
        err_interp += (build_linear_model(small).J - A).norm();
        err_regr += (build_linear_model(large).J - A).norm();
    }
    CHECK(err_regr < err_interp);
}

TEST_CASE("full_model: zero residual gives c = 0, g = 0, H = 2 J'J") {
    LinearResidualModel lm;
    lm.r = Vector::Zero(3);
    lm.J = Matrix::Identity(3, 2) * 2.0;
    const FullModel fm = full_model(lm);
    CHECK(fm.c == 0.0);
    CHECK(fm.g.norm() == 0.0);
    CHECK((fm.H - 2.0 * lm.J.transpose() * lm.J).norm() == 0.0);
}

TEST_CASE("full_model: scalar case r = 3, J = 2") {
    LinearResidualModel lm;
    lm.r = Vector::Constant(1, 3.0);
    lm.J = Matrix::Constant(1, 1, 2.0);
    const FullModel fm = full_model(lm);
    CHECK(fm.c == 9.0);
    CHECK(fm.g(0) == 12.0);
    CHECK(fm.H(0, 0) == 8.0);
}

TEST_CASE("full_model: m(s) equals |r + J s|^2") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        LinearResidualModel lm;
        lm.r = gaussian(5, 1, rng);
        lm.J = gaussian(5, 3, rng);
        const Vector s = gaussian(3, 1, rng);
        const FullModel fm = full_model(lm);
        const double direct = (lm.r + lm.J * s).squaredNorm();
        CHECK(std::abs(fm.value(s) - direct) <= 1e-10 * std::max(1.0, direct));
        CHECK(std::abs((fm.c - fm.decrease(s)) - direct) <= 1e-10 * std::max(1.0, direct));
    }
}

TEST_CASE("lagrange_basis: square case is cardinal and sums to one") {
    Rng rng(9);
    const int n = 3;
    const InterpolationSet set = affine_set(gaussian(2, n, rng), Vector::Zero(2), Vector::Zero(n), n, 1.0, rng);
    const LagrangeBasis basis = lagrange_basis(set);
    for (std::size_t t = 0; t < set.size(); ++t)
        for (std::size_t s = 0; s < set.size(); ++s)
            CHECK(std::abs(basis.value(t, set.point(s)) - (s == t ? 1.0 : 0.0)) < 1e-9);
    const Vector y = gaussian(n, 1, rng);
    CHECK(std::abs(basis.values(y).sum() - 1.0) < 1e-12);
}

TEST_CASE("lagrange_basis: regression coefficients match the normal-equations oracle") {
    Rng rng(10);
    const int n = 2, p = 6;
    const Vector x = Vector::Zero(n);
    const InterpolationSet set = affine_set(gaussian(1, n, rng), Vector::Zero(1), x, p, 1.0, rng);
    const LagrangeBasis basis = lagrange_basis(set);
    Matrix W(p + 1, n + 1);
    for (int t = 0; t <= p; ++t) {
        W(t, 0) = 1.0;
        W.row(t).tail(n) = (set.point(static_cast<std::size_t>(t)) - set.base_point()).transpose();
    }
    const Matrix ref = oracle::normal_equations(W, Matrix::Identity(p + 1, p + 1));
    for (int t = 0; t <= p; ++t) {
        CHECK(std::abs(basis.c(t) - ref(0, t)) < 1e-9);
        CHECK((basis.g.col(t) - ref.col(t).tail(n)).norm() < 1e-9);
    }
}

TEST_CASE("poisedness_estimate: ideal set matches a grid search over the ball") {
    const double delta = 0.5;
    InterpolationSet set(Vector::Zero(2), Vector::Zero(1));
    set.append(Vector::Unit(2, 0) * delta, Vector::Ones(1));
    set.append(Vector::Unit(2, 1) * delta, Vector::Ones(1));
    const LagrangeBasis basis = lagrange_basis(set);
    double grid = 0.0;
    for (std::size_t t = 0; t < 3; ++t) grid = std::max(grid, grid_max_lagrange(basis, t, Vector::Zero(2), delta, nullptr));
    const double lam = poisedness_estimate(set, Vector::Zero(2), delta);
    // L_0 = 1 - (y1 + y2)/delta peaks at 1 + sqrt(2).
    CHECK(std::abs(lam - (1.0 + std::sqrt(2.0))) < 1e-12);
    CHECK(std::abs(lam - grid) < 1e-3 * lam);
}

TEST_CASE("poisedness_estimate: invariant under a common scaling") {
    Rng rng(13);
    InterpolationSet a(Vector::Zero(3), Vector::Zero(1)), b(Vector::Zero(3), Vector::Zero(1));
    const Matrix D = gaussian(3, 3, rng);
    for (int t = 0; t < 3; ++t) {
        a.append(D.col(t), Vector::Ones(1));
        b.append(7.0 * D.col(t), Vector::Ones(1));
    }
    const double la = poisedness_estimate(a, Vector::Zero(3), 1.0);
    const double lb = poisedness_estimate(b, Vector::Zero(3), 7.0);
    CHECK(std::abs(la - lb) < 1e-10 * la);
}

TEST_CASE("poisedness_estimate: nearly collinear set is badly poised") {
    InterpolationSet set(Vector::Zero(2), Vector::Zero(1));
    Vector y1(2), y2(2);
    y1 << 1.0, 0.0;
    y2 << 0.5, 1e-3;
    set.append(y1, Vector::Ones(1));
    set.append(y2, Vector::Ones(1));
    const double lam = poisedness_estimate(set, Vector::Zero(2), 1.0);
    CHECK(lam >= 100.0);
    const LagrangeBasis basis = lagrange_basis(set);
    double grid = 0.0;
    for (std::size_t t = 0; t < 3; ++t) grid = std::max(grid, grid_max_lagrange(basis, t, Vector::Zero(2), 1.0, nullptr));
    CHECK(grid >= 100.0);
}

TEST_CASE("geometry_point: linear polynomial is maximized on the sphere") {
    LagrangeBasis basis;
    basis.center = Vector::Zero(2);
    basis.c = Vector::Zero(1);
    basis.g = Matrix::Zero(2, 1);
    basis.g(0, 0) = 1.0;
    const Vector y = geometry_point(basis, 0, Vector::Zero(2), 1.0, nullptr);
    CHECK(std::abs(std::abs(y(0)) - 1.0) < 1e-14);
    CHECK(std::abs(y(1)) < 1e-14);
    CHECK(std::abs(std::abs(basis.value(0, y)) - 1.0) < 1e-14);
}

TEST_CASE("geometry_point: sign follows the larger magnitude") {
    LagrangeBasis basis;
    basis.center = Vector::Zero(2);
    basis.c = Vector::Constant(1, 0.5);
    basis.g = Matrix::Zero(2, 1);
    basis.g(0, 0) = 1.0;
    const Vector y = geometry_point(basis, 0, Vector::Zero(2), 1.0, nullptr);
    CHECK(y(0) == doctest::Approx(1.0));
    CHECK(std::abs(basis.value(0, y) - 1.5) < 1e-14);
}

TEST_CASE("geometry_point: box-clipped ball within 2% of the grid optimum") {
    Rng rng(17);
    const Box box{Vector::Zero(2), Vector::Constant(2, 0.3)};
    for (int trial = 0; trial < 20; ++trial) {
        LagrangeBasis basis;
        basis.center = Vector::Constant(2, 0.1);
        basis.c = gaussian(1, 1, rng);
        basis.g = gaussian(2, 1, rng);
        const Vector center = Vector::Constant(2, 0.1);
        const Vector y = geometry_point(basis, 0, center, 0.25, &box);
        CHECK(box.contains(y, 1e-14));
        CHECK((y - center).norm() <= 0.25 * (1.0 + 1e-12));
        const double grid = grid_max_lagrange(basis, 0, center, 0.25, &box);
        CHECK(std::abs(basis.value(0, y)) >= 0.98 * grid);
    }
}

TEST_CASE("geometry_point: zero gradient falls back to a random sphere point") {
    LagrangeBasis basis;
    basis.center = Vector::Zero(3);
    basis.c = Vector::Ones(1);
    basis.g = Matrix::Zero(3, 1);
    Rng rng(4);
    bool fallback = false;
    const Vector y = geometry_point(basis, 0, Vector::Zero(3), 2.0, nullptr, &rng, &fallback);
    CHECK(fallback);
    CHECK(std::abs(y.norm() - 2.0) < 1e-12);
}

TEST_CASE("needs_geometry_improvement: strict distance rule") {
    InterpolationSet set(Vector::Zero(2), Vector::Zero(1));
    set.append(Vector::Unit(2, 0), Vector::Ones(1));
    set.append(Vector::Unit(2, 1) * 0.5, Vector::Ones(1));
    CHECK_FALSE(needs_geometry_improvement(set, Vector::Zero(2), 2.0));
    CHECK_FALSE(needs_geometry_improvement(set, Vector::Zero(2), 1.0));
    set.append(Vector::Unit(2, 0) * 10.0, Vector::Ones(1));
    CHECK(needs_geometry_improvement(set, Vector::Zero(2), 1.0));
}

TEST_CASE("choose_point_to_replace: distant point dominates") {
    InterpolationSet set(Vector::Zero(2), Vector::Zero(1));
    set.append(Vector::Unit(2, 0), Vector::Ones(1));
    set.append(Vector::Unit(2, 1) * 10.0, Vector::Ones(1));
    const LagrangeBasis basis = lagrange_basis(set);
    Vector y(2);
    y << 0.5, 0.5;
    CHECK(choose_point_to_replace(set, basis, y, Vector::Zero(2), 1.0) == 2);
}

TEST_CASE("choose_point_to_replace: equidistant points pick the largest Lagrange value") {
    InterpolationSet set(Vector::Zero(2), Vector::Zero(1));
    set.append(Vector::Unit(2, 0), Vector::Ones(1));
    set.append(Vector::Unit(2, 1), Vector::Ones(1));
    const LagrangeBasis basis = lagrange_basis(set);
    Vector y(2);
    y << 0.2, 0.9;
    // L_1 = y1, L_2 = y2: point 2 has the larger value.
    CHECK(choose_point_to_replace(set, basis, y, Vector::Zero(2), 1.0) == 2);
}

TEST_CASE("choose_point_to_replace: matches exhaustive scoring") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 3;
        InterpolationSet set(Vector::Zero(n), Vector::Zero(1));
        const Matrix D = gaussian(n, n + 2, rng);
        for (int t = 0; t < n + 2; ++t) set.append(D.col(t), Vector::Constant(1, 1.0 + t));
        const LagrangeBasis basis = lagrange_basis(set);
        const Vector y = gaussian(n, 1, rng);
        const Vector center = set.base_point();
        const double delta = 0.7;
        std::size_t best = 0;
        double best_score = -1.0;
        for (std::size_t t = 0; t < set.size(); ++t) {
            if (t == set.base_index()) continue;
            const double dist = (set.point(t) - center).norm();
            const double score = std::abs(basis.value(t, y)) * std::max(std::pow(dist / delta, 4.0), 1.0);
            if (score > best_score) {
                best_score = score;
                best = t;
            }
        }
        CHECK(choose_point_to_replace(set, basis, y, center, delta) == best);
    }
}

TEST_CASE("update_set: append, base movement and duplicates") {
    InterpolationSet set(Vector::Zero(2), Vector::Constant(1, 2.0));
    set = update_set(set, Vector::Unit(2, 0), Vector::Constant(1, 3.0), std::nullopt);
    CHECK(set.size() == 2);
    CHECK(set.base_index() == 0);
    set = update_set(set, Vector::Unit(2, 1), Vector::Constant(1, 1.0), std::size_t{1});
    CHECK(set.size() == 2);
    CHECK(set.base_index() == 1);
    set = update_set(set, Vector::Constant(2, 0.5), Vector::Constant(1, 5.0), std::size_t{0});
    CHECK(set.base_index() == 1);
    CHECK_THROWS_AS(update_set(set, Vector::Unit(2, 1), Vector::Ones(1), std::nullopt), std::invalid_argument);
}
