#pragma once

// Derivative-based reference minimizer for the test suite: Levenberg-Marquardt on central
// finite-difference Jacobians, run to convergence in double precision.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& F, const Vec& x) {
    const Vec r0 = F(x);
    Mat J(r0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (F(xp) - F(xm)) / (xp(j) - xm(j));
    }
    return J;
}

struct LMResult {
    Vec x;
    double f = 0.0;
    int iterations = 0;
};

inline LMResult levenberg_marquardt(const std::function<Vec(const Vec&)>& F, Vec x, int max_iter = 20000) {
    Vec r = F(x);
    double f = r.squaredNorm();
    double lambda = 1e-3;
    int stalls = 0;
    int it = 0;
    Vec d;
    for (; it < max_iter && f > 0.0; ++it) {
        const Mat J = fd_jacobian(F, x);
        const Mat A = J.transpose() * J;
        const Vec g = J.transpose() * r;
        // Scaling as in MINPACK: running maximum of the column norms.
        d = d.size() ? Vec(d.cwiseMax(A.diagonal())) : Vec(A.diagonal());
        d = d.cwiseMax(1e-12 * std::max(1.0, d.maxCoeff()));
        bool accepted = false;
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
            Mat M = A;
            M.diagonal() += lambda * d;
            const Vec s = M.ldlt().solve(-g);
            const Vec xn = x + s;
            const Vec rn = F(xn);
            const double fn = rn.allFinite() ? rn.squaredNorm() : INFINITY;
            if (fn < f) {
                const double rel = (f - fn) / std::max(f, 1e-300);
                stalls = rel < 1e-15 ? stalls + 1 : 0;
                x = xn;
                r = rn;
                f = fn;
                lambda = std::max(lambda / 3.0, 1e-15);
                accepted = true;
            } else {
                lambda *= 4.0;
                if (lambda > 1e20) break;
            }
        }
        if (!accepted || stalls >= 10) break;
    }
    return {x, f, it};
}

}  // namespace oracle
