#include "dfols/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dfols {

namespace {

using std::exp;

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Vector linear_full_rank(const Vector& x, int m) {
    const int n = static_cast<int>(x.size());
    const double s = 2.0 * x.sum() / m + 1.0;
    Vector r(m);
    for (int i = 0; i < m; ++i) r(i) = (i < n ? x(i) : 0.0) - s;
    return r;
}

Vector linear_rank1(const Vector& x, int m) {
    const int n = static_cast<int>(x.size());
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += (j + 1) * x(j);
    Vector r(m);
    for (int i = 0; i < m; ++i) r(i) = (i + 1) * s - 1.0;
    return r;
}

Vector linear_rank1_zero(const Vector& x, int m) {
    const int n = static_cast<int>(x.size());
    double s = 0.0;
    for (int j = 1; j < n - 1; ++j) s += (j + 1) * x(j);
    Vector r(m);
    for (int i = 0; i < m; ++i) r(i) = (i == 0 || i == m - 1) ? -1.0 : i * s - 1.0;
    return r;
}

Vector rosenbrock(const Vector& x) { return vec({10.0 * (x(1) - x(0) * x(0)), 1.0 - x(0)}); }

Vector helical_valley(const Vector& x) {
    const double tpi = 2.0 * std::numbers::pi;
    double th;
    if (x(0) > 0.0)
        th = std::atan(x(1) / x(0)) / tpi;
    else if (x(0) < 0.0)
        th = std::atan(x(1) / x(0)) / tpi + 0.5;
    else
        th = x(1) >= 0.0 ? 0.25 : -0.25;
    return vec({10.0 * (x(2) - 10.0 * th), 10.0 * (std::hypot(x(0), x(1)) - 1.0), x(2)});
}

Vector powell_singular(const Vector& x) {
    return vec({x(0) + 10.0 * x(1), std::sqrt(5.0) * (x(2) - x(3)), (x(1) - 2.0 * x(2)) * (x(1) - 2.0 * x(2)),
                std::sqrt(10.0) * (x(0) - x(3)) * (x(0) - x(3))});
}

Vector freudenstein_roth(const Vector& x) {
    return vec({-13.0 + x(0) + ((5.0 - x(1)) * x(1) - 2.0) * x(1),
                -29.0 + x(0) + ((1.0 + x(1)) * x(1) - 14.0) * x(1)});
}

Vector bard(const Vector& x) {
    static const double y[15] = {0.14, 0.18, 0.22, 0.25, 0.29, 0.32, 0.35, 0.39,
                                 0.37, 0.58, 0.73, 0.96, 1.34, 2.10, 4.39};
    Vector r(15);
    for (int i = 0; i < 15; ++i) {
        const double u = i + 1, v = 15 - i, w = std::min(u, v);
        r(i) = y[i] - (x(0) + u / (x(1) * v + x(2) * w));
    }
    return r;
}

Vector kowalik_osborne(const Vector& x) {
    static const double v[11] = {4.0, 2.0, 1.0, 0.5, 0.25, 0.167, 0.125, 0.1, 0.0833, 0.0714, 0.0625};
    static const double y[11] = {0.1957, 0.1947, 0.1735, 0.16, 0.0844, 0.0627,
                                 0.0456, 0.0342, 0.0323, 0.0235, 0.0246};
    Vector r(11);
    for (int i = 0; i < 11; ++i)
        r(i) = y[i] - x(0) * (v[i] * v[i] + x(1) * v[i]) / (v[i] * v[i] + x(2) * v[i] + x(3));
    return r;
}

Vector meyer(const Vector& x) {
    static const double y[16] = {34780, 28610, 23650, 19630, 16370, 13720, 11540, 9744,
                                 8261,  7030,  6005,  5147,  4427,  3820,  3307,  2872};
    Vector r(16);
    for (int i = 0; i < 16; ++i) {
        const double t = 45.0 + 5.0 * (i + 1);
        r(i) = x(0) * exp(x(1) / (t + x(2))) - y[i];
    }
    return r;
}

Vector watson(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(31);
    for (int i = 0; i < 29; ++i) {
        const double t = (i + 1) / 29.0;
        double s1 = 0.0, s2 = 0.0, dx = 1.0;
        for (int j = 1; j < n; ++j) {
            s1 += j * x(j) * dx;
            dx *= t;
        }
        dx = 1.0;
        for (int j = 0; j < n; ++j) {
            s2 += x(j) * dx;
            dx *= t;
        }
        r(i) = s1 - s2 * s2 - 1.0;
    }
    r(29) = x(0);
    r(30) = x(1) - x(0) * x(0) - 1.0;
    return r;
}

Vector box3d(const Vector& x) {
    Vector r(10);
    for (int i = 0; i < 10; ++i) {
        const double t = 0.1 * (i + 1);
        r(i) = exp(-t * x(0)) - exp(-t * x(1)) - x(2) * (exp(-t) - exp(-10.0 * t));
    }
    return r;
}

Vector jennrich_sampson(const Vector& x) {
    Vector r(10);
    for (int i = 0; i < 10; ++i) {
        const double k = i + 1;
        r(i) = 2.0 + 2.0 * k - (exp(k * x(0)) + exp(k * x(1)));
    }
    return r;
}

Vector brown_dennis(const Vector& x) {
    Vector r(20);
    for (int i = 0; i < 20; ++i) {
        const double t = (i + 1) / 5.0;
        const double a = x(0) + t * x(1) - exp(t);
        const double b = x(2) + x(3) * std::sin(t) - std::cos(t);
        r(i) = a * a + b * b;
    }
    return r;
}

Vector chebyquad(const Vector& x) {
    const int n = static_cast<int>(x.size());
    const int m = n;
    Vector r = Vector::Zero(m);
    for (int j = 0; j < n; ++j) {
        const double z = 2.0 * x(j) - 1.0;
        double t0 = 1.0, t1 = z;
        for (int i = 0; i < m; ++i) {
            r(i) += t1;
            const double t2 = 2.0 * z * t1 - t0;
            t0 = t1;
            t1 = t2;
        }
    }
    for (int i = 0; i < m; ++i) {
        const int k = i + 1;
        r(i) /= n;
        if (k % 2 == 0) r(i) += 1.0 / (static_cast<double>(k) * k - 1.0);
    }
    return r;
}

Vector brown_almost_linear(const Vector& x) {
    const int n = static_cast<int>(x.size());
    const double s = x.sum();
    Vector r(n);
    for (int i = 0; i < n - 1; ++i) r(i) = x(i) + s - (n + 1.0);
    r(n - 1) = x.prod() - 1.0;
    return r;
}

Vector osborne1(const Vector& x) {
    static const double y[33] = {0.844, 0.908, 0.932, 0.936, 0.925, 0.908, 0.881, 0.850, 0.818, 0.784, 0.751,
                                 0.718, 0.685, 0.658, 0.628, 0.603, 0.580, 0.558, 0.538, 0.522, 0.506, 0.490,
                                 0.478, 0.467, 0.457, 0.448, 0.438, 0.431, 0.424, 0.420, 0.414, 0.411, 0.406};
    Vector r(33);
    for (int i = 0; i < 33; ++i) {
        const double t = 10.0 * i;
        r(i) = y[i] - (x(0) + x(1) * exp(-t * x(3)) + x(2) * exp(-t * x(4)));
    }
    return r;
}

Vector osborne2(const Vector& x) {
    static const double y[65] = {1.366, 1.191, 1.112, 1.013, 0.991, 0.885, 0.831, 0.847, 0.786, 0.725, 0.746,
                                 0.679, 0.608, 0.655, 0.616, 0.606, 0.602, 0.626, 0.651, 0.724, 0.649, 0.649,
                                 0.694, 0.644, 0.624, 0.661, 0.612, 0.558, 0.533, 0.495, 0.500, 0.423, 0.395,
                                 0.375, 0.372, 0.391, 0.396, 0.405, 0.428, 0.429, 0.523, 0.562, 0.607, 0.653,
                                 0.672, 0.708, 0.633, 0.668, 0.645, 0.632, 0.591, 0.559, 0.597, 0.625, 0.739,
                                 0.710, 0.729, 0.720, 0.636, 0.581, 0.428, 0.292, 0.162, 0.098, 0.054};
    Vector r(65);
    for (int i = 0; i < 65; ++i) {
        const double t = i / 10.0;
        const double a = t - x(8), b = t - x(9), c = t - x(10);
        r(i) = y[i] - (x(0) * exp(-t * x(4)) + x(1) * exp(-a * a * x(5)) + x(2) * exp(-b * b * x(6)) +
                       x(3) * exp(-c * c * x(7)));
    }
    return r;
}

Vector bdqrtic(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(2 * (n - 4));
    for (int i = 0; i < n - 4; ++i) {
        r(i) = -4.0 * x(i) + 3.0;
        r(n - 4 + i) = x(i) * x(i) + 2.0 * x(i + 1) * x(i + 1) + 3.0 * x(i + 2) * x(i + 2) +
                       4.0 * x(i + 3) * x(i + 3) + 5.0 * x(n - 1) * x(n - 1);
    }
    return r;
}

Vector cube(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(n);
    r(0) = x(0) - 1.0;
    for (int i = 1; i < n; ++i) r(i) = 10.0 * (x(i) - x(i - 1) * x(i - 1) * x(i - 1));
    return r;
}

double mancino_sum(double xi, int i, int n) {
    double ss = 0.0;
    for (int j = 1; j <= n; ++j) {
        const double v = std::sqrt(xi * xi + static_cast<double>(i) / j);
        const double lv = std::log(v);
        ss += v * (std::pow(std::sin(lv), 5) + std::pow(std::cos(lv), 5));
    }
    return ss;
}

Vector mancino(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(n);
    for (int i = 1; i <= n; ++i) {
        const double c = i - 50.0;
        r(i - 1) = 1400.0 * x(i - 1) + c * c * c + mancino_sum(x(i - 1), i, n);
    }
    return r;
}

Vector mancino_start(int n) {
    Vector x0(n);
    for (int i = 1; i <= n; ++i) {
        const double c = i - 50.0;
        x0(i - 1) = -8.710996e-4 * (c * c * c + mancino_sum(0.0, i, n));
    }
    return x0;
}

Vector heart8(const Vector& x) {
    const double a = x(0), b = x(1), c = x(2), d = x(3), t = x(4), u = x(5), v = x(6), w = x(7);
    return vec({a + b - 0.69, c + d - 0.044, t * a + u * b - v * c - w * d + 1.57, v * a + w * b + t * c + u * d + 1.31,
                a * (t * t - v * v) - 2.0 * c * t * v + b * (u * u - w * w) - 2.0 * d * u * w + 2.65,
                c * (t * t - v * v) + 2.0 * a * t * v + d * (u * u - w * w) + 2.0 * b * u * w - 2.0,
                a * t * (t * t - 3.0 * v * v) + c * v * (v * v - 3.0 * t * t) + b * u * (u * u - 3.0 * w * w) +
                    d * w * (w * w - 3.0 * u * u) + 12.6,
                c * t * (t * t - 3.0 * v * v) - a * v * (v * v - 3.0 * t * t) + d * u * (u * u - 3.0 * w * w) -
                    b * w * (w * w - 3.0 * u * u) - 9.48});
}

Vector gaussian(const Vector& x) {
    static const double y[15] = {0.0009, 0.0044, 0.0175, 0.0540, 0.1295, 0.2420, 0.3521, 0.3989,
                                 0.3521, 0.2420, 0.1295, 0.0540, 0.0175, 0.0044, 0.0009};
    Vector r(15);
    for (int i = 0; i < 15; ++i) {
        const double t = (7.0 - i) / 2.0;
        const double e = t - x(2);
        r(i) = x(0) * exp(-x(1) * e * e / 2.0) - y[i];
    }
    return r;
}

Vector broyden_tridiagonal(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(n);
    for (int i = 0; i < n; ++i) {
        const double xm = i > 0 ? x(i - 1) : 0.0;
        const double xp = i < n - 1 ? x(i + 1) : 0.0;
        r(i) = (3.0 - 2.0 * x(i)) * x(i) - xm - 2.0 * xp + 1.0;
    }
    return r;
}

Vector broyden_banded(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = std::max(0, i - 5); j <= std::min(n - 1, i + 1); ++j)
            if (j != i) s += x(j) * (1.0 + x(j));
        r(i) = x(i) * (2.0 + 5.0 * x(i) * x(i)) + 1.0 - s;
    }
    return r;
}

Vector generalized_rosenbrock(const Vector& x) {
    const int n = static_cast<int>(x.size());
    Vector r(2 * (n - 1));
    for (int i = 0; i < n - 1; ++i) {
        r(2 * i) = 10.0 * (x(i + 1) - x(i) * x(i));
        r(2 * i + 1) = 1.0 - x(i);
    }
    return r;
}

struct Entry {
    std::string name;
    int n;
    int m;
    ResidualFn fn;
    Vector x0;
    double f_star;
    Vector x_star;
    bool zero_residual;
    int mw_index;
    std::vector<std::string> tags;
};

LeastSquaresProblem make(Entry e) {
    LeastSquaresProblem p;
    p.name = std::move(e.name);
    p.n = e.n;
    p.m = e.m;
    p.residual = std::move(e.fn);
    p.x0 = std::move(e.x0);
    p.f_star = e.f_star;
    p.x_star = std::move(e.x_star);
    p.zero_residual = e.zero_residual;
    p.mw_index = e.mw_index;
    p.tags = std::move(e.tags);
    p.scalable = p.has_tag("scalable");
    return p;
}

#include "problem_solutions.inc"

std::vector<LeastSquaresProblem> build_catalog() {
    std::vector<LeastSquaresProblem> c;
    const std::vector<std::string> mw{"mw"};
    auto add = [&](const std::string& name, int n, int m, ResidualFn fn, Vector x0, int mw_index,
                   std::vector<std::string> tags) {
        const Solution& s = solution_for(name);
        c.push_back(make({name, n, m, std::move(fn), std::move(x0), s.f_star, s.x_star, s.f_star == 0.0, mw_index,
                          std::move(tags)}));
    };
    add("linear_full_rank", 9, 45, [](const Vector& x) { return linear_full_rank(x, 45); }, Vector::Ones(9), 1, mw);
    add("linear_rank1", 7, 35, [](const Vector& x) { return linear_rank1(x, 35); }, Vector::Ones(7), 3, mw);
    add("linear_rank1_zero", 7, 35, [](const Vector& x) { return linear_rank1_zero(x, 35); }, Vector::Ones(7), 5, mw);
    add("rosenbrock", 2, 2, rosenbrock, vec({-1.2, 1.0}), 7, mw);
    add("helical_valley", 3, 3, helical_valley, vec({-1.0, 0.0, 0.0}), 9, mw);
    add("powell_singular", 4, 4, powell_singular, vec({3.0, -1.0, 0.0, 1.0}), 11, mw);
    add("freudenstein_roth", 2, 2, freudenstein_roth, vec({0.5, -2.0}), 13, mw);
    add("bard", 3, 15, bard, Vector::Ones(3), 15, mw);
    add("kowalik_osborne", 4, 11, kowalik_osborne, vec({0.25, 0.39, 0.415, 0.39}), 17, mw);
    add("meyer", 3, 16, meyer, vec({0.02, 4000.0, 250.0}), 18, mw);
    add("watson6", 6, 31, watson, Vector::Zero(6), 19, mw);
    add("watson9", 9, 31, watson, Vector::Zero(9), 21, mw);
    add("box3d", 3, 10, box3d, vec({0.0, 10.0, 20.0}), 25, mw);
    add("jennrich_sampson", 2, 10, jennrich_sampson, vec({0.3, 0.4}), 26, mw);
    add("brown_dennis", 4, 20, brown_dennis, vec({25.0, 5.0, -5.0, -1.0}), 27, mw);
    auto cheb_x0 = [](int n) {
        Vector x(n);
        for (int j = 0; j < n; ++j) x(j) = (j + 1.0) / (n + 1.0);
        return x;
    };
    add("chebyquad6", 6, 6, chebyquad, cheb_x0(6), 29, mw);
    add("chebyquad8", 8, 8, chebyquad, cheb_x0(8), 31, mw);
    add("brown_almost_linear", 10, 10, brown_almost_linear, Vector::Constant(10, 0.5), 35, mw);
    add("osborne1", 5, 33, osborne1, vec({0.5, 1.5, -1.0, 0.01, 0.02}), 36, mw);
    add("osborne2", 11, 65, osborne2, vec({1.3, 0.65, 0.65, 0.7, 0.6, 3.0, 5.0, 7.0, 2.0, 4.5, 5.5}), 37, mw);
    add("bdqrtic8", 8, 8, bdqrtic, Vector::Ones(8), 39, mw);
    add("cube5", 5, 5, cube, Vector::Constant(5, 0.5), 43, mw);
    add("mancino5", 5, 5, mancino, mancino_start(5), 46, mw);
    const Vector heart_x0 = vec({-0.3, -0.39, 0.3, -0.344, -1.2, 2.69, 1.59, -1.5});
    add("heart8", 8, 8, heart8, heart_x0, 52, mw);
    add("broyden_tridiagonal", 10, 10, broyden_tridiagonal, Vector::Constant(10, -1.0), 0, mw);
    add("broyden_banded", 10, 10, broyden_banded, Vector::Constant(10, -1.0), 0, mw);
    add("gaussian", 3, 15, gaussian, vec({0.4, 1.0, 0.0}), 0, mw);

    // Starting points scaled by 10.
    const std::vector<std::string> variant{"variant"};
    add("linear_full_rank_s1", 9, 45, [](const Vector& x) { return linear_full_rank(x, 45); },
        Vector::Constant(9, 10.0), 2, variant);
    add("freudenstein_roth_s1", 2, 2, freudenstein_roth, vec({5.0, -20.0}), 14, variant);
    add("heart8_s1", 8, 8, heart8, 10.0 * heart_x0, 53, variant);

    for (int n : {25, 50, 100}) {
        const std::string sfx = "_" + std::to_string(n);
        const std::vector<std::string> sc{"scalable"};
        Vector gx(n);
        for (int i = 0; i < n; ++i) gx(i) = (i + 1.0) / (n + 1.0);
        add("generalized_rosenbrock" + sfx, n, 2 * (n - 1), generalized_rosenbrock, gx, 0, sc);
        add("broyden_tridiagonal" + sfx, n, n, broyden_tridiagonal, Vector::Constant(n, -1.0), 0, sc);
        add("broyden_banded" + sfx, n, n, broyden_banded, Vector::Constant(n, -1.0), 0, sc);
        add("linear_full_rank" + sfx, n, 2 * n, [n](const Vector& x) { return linear_full_rank(x, 2 * n); },
            Vector::Ones(n), 0, sc);
    }
    return c;
}

const std::vector<LeastSquaresProblem>& registry() {
    static const std::vector<LeastSquaresProblem> r = build_catalog();
    return r;
}

}  // namespace

bool LeastSquaresProblem::has_tag(const std::string& t) const {
    return std::find(tags.begin(), tags.end(), t) != tags.end();
}

std::vector<LeastSquaresProblem> catalog(const std::string& filter) {
    std::vector<LeastSquaresProblem> out;
    for (const auto& p : registry())
        if (filter.empty() || filter == "all" || p.name == filter || p.has_tag(filter)) out.push_back(p);
    return out;
}

LeastSquaresProblem find_problem(const std::string& name) {
    for (const auto& p : registry())
        if (p.name == name) return p;
    throw UnknownProblemError(name);
}

std::vector<std::string> problem_names(const std::string& filter) {
    std::vector<std::string> out;
    for (const auto& p : catalog(filter)) out.push_back(p.name);
    return out;
}

std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::none: return "none";
        case NoiseKind::mult_gaussian: return "mult_gaussian";
        case NoiseKind::add_gaussian: return "add_gaussian";
        case NoiseKind::add_chi2: return "add_chi2";
    }
    return "unknown";
}

NoiseModel NoiseModel::parse(const std::string& spec) {
    NoiseModel nm;
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    if (kind == "none" || kind.empty()) {
        nm.kind = NoiseKind::none;
    } else if (kind == "mult_gaussian" || kind == "mult") {
        nm.kind = NoiseKind::mult_gaussian;
    } else if (kind == "add_gaussian" || kind == "add") {
        nm.kind = NoiseKind::add_gaussian;
    } else if (kind == "add_chi2" || kind == "chi2") {
        nm.kind = NoiseKind::add_chi2;
    } else {
        throw std::invalid_argument("unknown noise kind: " + kind);
    }
    if (colon != std::string::npos) {
        const std::string num = spec.substr(colon + 1);
        std::size_t used = 0;
        try {
            nm.sigma = std::stod(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != num.size() || !(nm.sigma >= 0.0))
            throw std::invalid_argument("bad noise level in " + spec);
    } else if (nm.kind != NoiseKind::none) {
        throw std::invalid_argument("noise spec needs kind:sigma, got " + spec);
    }
    return nm;
}

std::string NoiseModel::str() const {
    if (kind == NoiseKind::none) return "none";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:%.17g", to_string(kind).c_str(), sigma);
    return buf;
}

SplitMix64::result_type SplitMix64::operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t k : keys) {
        SplitMix64 g(h ^ k);
        h = g();
    }
    return h;
}

Vector apply_noise(const Vector& r, const NoiseModel& noise, std::uint64_t key) {
    if (noise.deterministic()) return r;
    SplitMix64 gen(key);
    std::normal_distribution<double> normal(0.0, noise.sigma);
    Vector out(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        const double e = normal(gen);
        switch (noise.kind) {
            case NoiseKind::mult_gaussian: out(i) = (1.0 + e) * r(i); break;
            case NoiseKind::add_gaussian: out(i) = r(i) + e; break;
            case NoiseKind::add_chi2: out(i) = std::sqrt(r(i) * r(i) + e * e); break;
            case NoiseKind::none: out(i) = r(i); break;
        }
    }
    return out;
}

NoisyProblem::NoisyProblem(LeastSquaresProblem base, NoiseModel noise, std::uint64_t seed, std::uint64_t run)
    : base_(std::move(base)), noise_(noise), seed_(seed), run_(run), name_hash_(hash_string(base_.name)) {}

Vector NoisyProblem::evaluate_at(const Vector& x, std::uint64_t index) const {
    const Vector r = base_.residual(x);
    if (noise_.deterministic()) return r;
    return apply_noise(r, noise_, mix_keys({seed_, name_hash_, run_, index}));
}

Vector NoisyProblem::evaluate(const Vector& x) { return evaluate_at(x, count_++); }

ResidualFn NoisyProblem::callback() {
    return [this](const Vector& x) { return evaluate(x); };
}

double expected_noisy_objective(const NoiseModel& noise, double f, int m) {
    switch (noise.kind) {
        case NoiseKind::none: return f;
        case NoiseKind::mult_gaussian: return (1.0 + noise.sigma * noise.sigma) * f;
        case NoiseKind::add_gaussian:
        case NoiseKind::add_chi2: return f + m * noise.sigma * noise.sigma;
    }
    return f;
}

double expected_noisy_objective(const LeastSquaresProblem& problem, const NoiseModel& noise, const Vector& x) {
    return expected_noisy_objective(noise, problem.f(x), problem.m);
}

double noise_std_at(const LeastSquaresProblem& problem, const NoiseModel& noise, const Vector& x, int n_samples,
                    std::uint64_t seed) {
    if (n_samples < 2) throw std::invalid_argument("noise_std_at: need at least two samples");
    if (noise.deterministic()) return 0.0;
    const Vector r = problem.residual(x);
    const std::uint64_t base = mix_keys({seed, hash_string(problem.name), 0x5157ULL});
    // Welford accumulation.
    double mean = 0.0, m2 = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        const double f = apply_noise(r, noise, mix_keys({base, static_cast<std::uint64_t>(k)})).squaredNorm();
        const double d = f - mean;
        mean += d / (k + 1);
        m2 += d * (f - mean);
    }
    return std::sqrt(m2 / (n_samples - 1));
}

}  // namespace dfols
