#include <cmath>
#include <random>

#include "doctest.h"

#include "dfols/trust_region.hpp"

using namespace dfols;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector free_lower(int n) { return Vector::Constant(n, -kInf); }
Vector free_upper(int n) { return Vector::Constant(n, kInf); }

FullModel model2(double g0, double g1, double h00, double h01, double h11) {
    FullModel m;
    m.c = 0.0;
    m.g = Vector(2);
    m.g << g0, g1;
    m.H = Matrix(2, 2);
    m.H << h00, h01, h01, h11;
    return m;
}

// Smallest model value on a dense grid over ball ∩ box.
double grid_min(const FullModel& m, double delta, const Vector& lo, const Vector& up) {
    double best = 0.0;
    const int K = 1001;
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
            Vector s(2);
            s << lo(0) + (up(0) - lo(0)) * i / (K - 1), lo(1) + (up(1) - lo(1)) * j / (K - 1);
            if (s.norm() > delta) continue;
            best = std::min(best, m.value(s));
        }
    return best;
}

// Independent form of the Cauchy bound for the unconstrained case.
double plain_bound(const FullModel& m, double delta) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.H);
    const double h = es.eigenvalues().cwiseAbs().maxCoeff();
    const double g = m.g.norm();
    return 0.5 * g * std::min(delta, g / std::max(h, 1.0));
}

}  // namespace

TEST_CASE("solve_trust_region: interior Newton point") {
    const FullModel m = model2(-2, 0, 2, 0, 2);
    const TrustRegionStep st = solve_trust_region(m, 10.0, free_lower(2), free_upper(2));
    CHECK(std::abs(st.s(0) - 1.0) < 1e-12);
    CHECK(std::abs(st.s(1)) < 1e-12);
}

TEST_CASE("solve_trust_region: steepest descent to the boundary when H = 0") {
    const FullModel m = model2(1, 0, 0, 0, 0);
    const TrustRegionStep st = solve_trust_region(m, 0.5, free_lower(2), free_upper(2));
    CHECK(std::abs(st.s(0) + 0.5) < 1e-12);
    CHECK(std::abs(st.s(1)) < 1e-12);
}

TEST_CASE("solve_trust_region: zero gradient returns zero") {
    const FullModel m = model2(0, 0, 1, 0, 1);
    const TrustRegionStep st = solve_trust_region(m, 1.0, free_lower(2), free_upper(2));
    CHECK(st.s.norm() == 0.0);
}

TEST_CASE("solve_trust_region: box-clipped problems within 5% of the grid minimizer") {
    Rng rng(3);
    std::normal_distribution<double> N;
    const Vector lo = Vector::Constant(2, -0.1), up = Vector::Constant(2, 0.1);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix J = Matrix::NullaryExpr(3, 2, [&]() { return N(rng); });
        const Vector r = Vector::NullaryExpr(3, [&]() { return N(rng); });
        FullModel m;
        m.c = r.squaredNorm();
        m.g = 2.0 * J.transpose() * r;
        m.H = 2.0 * J.transpose() * J;
        m.c = 0.0;
        const double delta = 0.12;
        const TrustRegionStep st = solve_trust_region(m, delta, lo, up);
        CHECK(st.s.norm() <= delta * (1.0 + 1e-12));
        CHECK((st.s.array() >= lo.array() - 1e-15).all());
        CHECK((st.s.array() <= up.array() + 1e-15).all());
        const double best = grid_min(m, delta, lo, up);
        CHECK(m.value(st.s) <= best + 0.05 * std::abs(best) + 1e-12);
    }
}

TEST_CASE("cauchy_point: 1-D minimizer along -g inside the region") {
    const FullModel m = model2(-2, 0, 2, 0, 2);
    const TrustRegionStep cp = cauchy_point(m, 10.0, free_lower(2), free_upper(2));
    CHECK(std::abs(cp.s(0) - 1.0) < 1e-12);
    CHECK(std::abs(cp.s(1)) < 1e-12);
}

TEST_CASE("cauchy_point: H = 0 goes to the ball or the box") {
    const FullModel m = model2(3, 4, 0, 0, 0);
    const TrustRegionStep ball = cauchy_point(m, 2.0, free_lower(2), free_upper(2));
    CHECK(std::abs(ball.s.norm() - 2.0) < 1e-12);
    CHECK(std::abs(ball.s(0) + 1.2) < 1e-12);
    const Vector lo = Vector::Constant(2, -0.4);
    const TrustRegionStep box = cauchy_point(m, 2.0, lo, free_upper(2));
    CHECK((box.s.array() >= lo.array() - 1e-15).all());
    CHECK(std::abs(box.s(1) + 0.4) < 1e-12);
}

TEST_CASE("cauchy_point and solve_trust_region: Cauchy decrease on random 3-D instances") {
    Rng rng(5);
    std::normal_distribution<double> N;
    std::uniform_real_distribution<double> U(0.01, 3.0);
    int cp_ok = 0, tr_ok = 0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        FullModel m;
        m.c = 0.0;
        m.g = Vector::NullaryExpr(3, [&]() { return N(rng); });
        const Matrix B = Matrix::NullaryExpr(3, 3, [&]() { return N(rng); });
        m.H = trial % 2 ? Matrix(B.transpose() * B) : Matrix(B + B.transpose());
        const double delta = U(rng);
        const double bound = plain_bound(m, delta);
        const TrustRegionStep cp = cauchy_point(m, delta, free_lower(3), free_upper(3));
        const TrustRegionStep st = solve_trust_region(m, delta, free_lower(3), free_upper(3));
        cp_ok += m.decrease(cp.s) >= bound - 1e-12;
        tr_ok += m.decrease(st.s) >= bound - 1e-12;
        CHECK(st.s.norm() <= delta * (1.0 + 1e-12));
    }
    CHECK(cp_ok == trials);
    CHECK(tr_ok == trials);
}

TEST_CASE("cauchy_decrease_bound: matches the eigenvalue form without bounds") {
    Rng rng(8);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 50; ++trial) {
        FullModel m;
        m.c = 0.0;
        m.g = Vector::NullaryExpr(4, [&]() { return N(rng); });
        const Matrix B = Matrix::NullaryExpr(4, 4, [&]() { return N(rng); });
        m.H = B + B.transpose();
        const double b = cauchy_decrease_bound(m, 0.7, free_lower(4), free_upper(4));
        CHECK(std::abs(b - plain_bound(m, 0.7)) < 1e-12 * std::max(1.0, b));
    }
}

TEST_CASE("satisfies_cauchy_decrease: accepts the Cauchy step and rejects a zero step") {
    const FullModel m = model2(1, -2, 3, 1, 2);
    const TrustRegionStep cp = cauchy_point(m, 0.3, free_lower(2), free_upper(2));
    CHECK(satisfies_cauchy_decrease(m, 0.3, free_lower(2), free_upper(2), cp.s));
    CHECK_FALSE(satisfies_cauchy_decrease(m, 0.3, free_lower(2), free_upper(2), Vector::Zero(2)));
}

TEST_CASE("solve_trust_region: badly scaled rank-one model still meets the Cauchy bound") {
    // A single dominant residual: H = 2 j j' with |j| ~ 1e60 gives exact ties in the bound.
    Vector j(3);
    j << 1.3e60, -2.1e59, 7.7e59;
    const double r = 4.2e58;
    FullModel m;
    m.c = r * r;
    m.g = 2.0 * r * j;
    m.H = 2.0 * j * j.transpose();
    const TrustRegionStep st = solve_trust_region(m, 0.5, free_lower(3), free_upper(3));
    CHECK(st.s.allFinite());
    CHECK(satisfies_cauchy_decrease(m, 0.5, free_lower(3), free_upper(3), st.s));
}
