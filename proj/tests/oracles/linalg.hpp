#pragma once

// Independent dense linear-algebra oracles for the tests: each one takes a different route
// from the library code it checks.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// (W'W)^{-1} W' B via a Cholesky factorization of the normal equations.
inline Mat normal_equations(const Mat& W, const Mat& B) {
    const Mat A = W.transpose() * W;
    return A.llt().solve(W.transpose() * B);
}

// W' (W W')^{-1} B via Cholesky of the Gram matrix.
inline Mat pseudoinverse_rows(const Mat& W, const Mat& B) {
    const Mat G = W * W.transpose();
    return W.transpose() * G.llt().solve(B);
}

// Singular values as square roots of the Gram matrix eigenvalues, sorted descending.
inline Vec singular_values(const Mat& A) {
    const Mat G = A.rows() < A.cols() ? Mat(A * A.transpose()) : Mat(A.transpose() * A);
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    std::sort(s.data(), s.data() + s.size(), [](double a, double b) { return a > b; });
    return s;
}

// Rank from a column-pivoted QR with a relative threshold on the diagonal of R.
inline int rank(const Mat& A, double rel_tol = 1e-10) {
    Eigen::ColPivHouseholderQR<Mat> qr(A);
    qr.setThreshold(rel_tol);
    return static_cast<int>(qr.rank());
}

// Largest principal angle (radians) between the column spans of A and B (both orthonormal).
// Uses the sine form |(I - A A') B|_2, which stays accurate for tiny angles where acos does not.
inline double max_principal_angle(const Mat& A, const Mat& B) {
    const Mat R = B - A * (A.transpose() * B);
    Eigen::JacobiSVD<Mat> svd(R);
    const double s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    return std::asin(std::min(1.0, s));
}

// Textbook least-squares line v = a + b k and Pearson correlation.
struct Line {
    double slope = 0.0;
    double correlation = 0.0;
};

inline Line fit_line(const std::vector<double>& k, const std::vector<double>& v) {
    const double n = static_cast<double>(k.size());
    double sk = 0, sv = 0, skk = 0, svv = 0, skv = 0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        sk += k[i];
        sv += v[i];
        skk += k[i] * k[i];
        svv += v[i] * v[i];
        skv += k[i] * v[i];
    }
    const double cov = n * skv - sk * sv;
    const double vk = n * skk - sk * sk;
    const double vv = n * svv - sv * sv;
    Line out;
    out.slope = cov / vk;
    out.correlation = cov / std::sqrt(vk * vv);
    return out;
}

}  // namespace oracle
