#include "dfols/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace dfols {

Matrix solve_regression(const Matrix& W, const Matrix& B) {
    if (W.rows() < W.cols()) throw std::invalid_argument("solve_regression: underdetermined system");
    if (B.rows() != W.rows()) throw std::invalid_argument("solve_regression: row mismatch");
    Eigen::ColPivHouseholderQR<Matrix> qr(W);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < W.cols()) throw DegenerateSetError();
    return qr.solve(B);
}

Matrix solve_min_norm(const Matrix& W, const Matrix& B) {
    if (B.rows() != W.rows()) throw std::invalid_argument("solve_min_norm: row mismatch");
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(W);
    cod.setThreshold(kRankTolerance);
    if (cod.rank() < W.rows()) throw DegenerateSetError();
    return cod.solve(B);
}

int numerical_rank(const Matrix& A) {
    if (A.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(A);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) >= kRankTolerance * s(0)) ++r;
    return r;
}

Matrix clamp_singular_values(const Matrix& J, int p, bool* used_fallback) {
    if (used_fallback) *used_fallback = false;
    if (p < 1) throw std::invalid_argument("clamp_singular_values: p must be positive");
    const Eigen::Index k = std::min(J.rows(), J.cols());
    if (p >= k) return J;

    Eigen::BDCSVD<Matrix> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector s = svd.singularValues();
    const double target = s(p - 1);
    if (s(0) == 0.0 || target < kRankTolerance * s(0)) {
        // Unit singular values on every numerically null direction keep the output full rank.
        const double tol = kRankTolerance * s(0);
        for (Eigen::Index i = 0; i < k; ++i)
            if (i >= p || s(i) <= tol) s(i) = std::max(s(i), 1.0);
        if (used_fallback) *used_fallback = true;
    } else {
        for (Eigen::Index i = p; i < k; ++i) s(i) = std::max(s(i), target);
    }
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

LinearFit linear_fit(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw std::invalid_argument("linear_fit: need at least two points");
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    LinearFit fit;
    if (sxx == 0.0 || syy == 0.0) return fit;
    fit.slope = sxy / sxx;
    fit.correlation = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    return fit;
}

std::vector<Vector> random_orthonormal(int n, int k, Rng& rng) {
    if (n < 1 || k < 1 || k > n) throw std::invalid_argument("random_orthonormal: need 1 <= k <= n");
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix G(n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i) G(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(n, k);
    const Matrix& R = qr.matrixQR();
    std::vector<Vector> out;
    out.reserve(k);
    for (int j = 0; j < k; ++j) out.emplace_back(R(j, j) < 0.0 ? Vector(-Q.col(j)) : Vector(Q.col(j)));
    return out;
}

Vector random_orthogonal_direction(const Matrix& D, Rng& rng) {
    const Eigen::Index n = D.rows();
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    if (D.cols() > 0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(D);
        qr.setThreshold(kRankTolerance);
        const Eigen::Index r = qr.rank();
        if (r < n) {
            Matrix Q = qr.householderQ() * Matrix::Identity(n, r);
            // Two passes keep the result orthogonal to machine precision.
            for (int pass = 0; pass < 2; ++pass) v -= Q * (Q.transpose() * v);
        }
    }
    const double nv = v.norm();
    if (nv == 0.0) {
        v.setZero();
        v(0) = 1.0;
        return v;
    }
    return v / nv;
}

}  // namespace dfols
