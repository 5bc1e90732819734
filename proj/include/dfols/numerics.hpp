#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dfols {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Raised when an interpolation system loses rank.
class DegenerateSetError : public std::runtime_error {
public:
    explicit DegenerateSetError(const std::string& what = "degenerate interpolation set")
        : std::runtime_error(what) {}
};

// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-12;

// Least-squares solution of W z = B (column by column). W must have full column rank.
Matrix solve_regression(const Matrix& W, const Matrix& B);

// Minimal-norm solution of the underdetermined system W z = B. W must have full row rank.
Matrix solve_min_norm(const Matrix& W, const Matrix& B);

// Raise singular values p+1..min(m,n) of J to sigma_p. When sigma_p is numerically
// zero the clamped directions get singular value 1 and *used_fallback is set.
Matrix clamp_singular_values(const Matrix& J, int p, bool* used_fallback = nullptr);

// Number of singular values at or above kRankTolerance * sigma_1.
int numerical_rank(const Matrix& A);

struct LinearFit {
    double slope = 0.0;
    double correlation = 0.0;
};

// Ordinary least-squares fit of value against index.
LinearFit linear_fit(const std::vector<std::pair<double, double>>& points);

// k orthonormal vectors in R^n from the QR factorization of a Gaussian matrix.
std::vector<Vector> random_orthonormal(int n, int k, Rng& rng);

// Unit vector orthogonal to the columns of D (n x q, q < n), drawn at random.
Vector random_orthogonal_direction(const Matrix& D, Rng& rng);

}  // namespace dfols
