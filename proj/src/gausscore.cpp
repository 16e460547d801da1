#include "formlab/gausscore.hpp"

#include <cmath>
#include <numeric>

namespace formlab::gausscore {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Permutation Permutation::identity(int d) {
    Permutation q;
    q.map.resize(d);
    std::iota(q.map.begin(), q.map.end(), 0);
    return q;
}

bool Permutation::is_identity() const {
    for (int l = 0; l < size(); ++l)
        if (map[l] != l) return false;
    return true;
}

bool Permutation::is_valid() const {
    std::vector<char> seen(map.size(), 0);
    for (int k : map) {
        if (k < 0 || k >= size() || seen[k]) return false;
        seen[k] = 1;
    }
    return true;
}

Permutation compose(const Permutation& outer, const Permutation& inner) {
    Permutation q;
    q.map.resize(inner.map.size());
    for (std::size_t l = 0; l < inner.map.size(); ++l) q.map[l] = outer.map[inner.map[l]];
    return q;
}

Permutation inverse(const Permutation& q) {
    Permutation r;
    r.map.resize(q.map.size());
    for (std::size_t l = 0; l < q.map.size(); ++l) r.map[q.map[l]] = static_cast<int>(l);
    return r;
}

FrameMatrix apply_permutation(const Permutation& q, const FrameMatrix& y) {
    FrameMatrix out(y.size());
    for (std::size_t l = 0; l < y.size(); ++l) out[q.map[l]] = y[l];
    return out;
}

std::vector<int> coordinate_sources(const Permutation& q) {
    std::vector<int> src(2 * q.map.size());
    for (std::size_t l = 0; l < q.map.size(); ++l) {
        src[2 * l] = 2 * q.map[l];
        src[2 * l + 1] = 2 * q.map[l] + 1;
    }
    return src;
}

MatX expand_to_coordinates(const Permutation& q) {
    std::size_t n = 2 * q.map.size();
    MatX m(n, n);
    auto src = coordinate_sources(q);
    for (std::size_t i = 0; i < n; ++i) m(i, src[i]) = 1.0;
    return m;
}

Mat2 regularize_covariance(const Mat2& sigma, double floor) {
    Mat2 s{sigma.a, 0.5 * (sigma.b + sigma.c), 0.5 * (sigma.b + sigma.c), sigma.d};
    double lo, hi;
    s.sym_eigenvalues(lo, hi);
    if (lo < floor) {
        double bump = floor - lo;
        s.a += bump;
        s.d += bump;
    }
    return s;
}

RoleGaussian make_role(Vec2 mu, const Mat2& sigma, double floor) {
    return RoleGaussian{mu, regularize_covariance(sigma, floor)};
}

GaussianEval precompute(const RoleGaussian& g) {
    double det = g.sigma.det();
    if (!(det > 0.0) || !std::isfinite(det))
        throw Error(ErrorKind::numeric, "covariance not positive definite");
    double inv = 1.0 / det;
    GaussianEval e;
    e.mu = g.mu;
    e.inv_a = g.sigma.d * inv;
    e.inv_b = -0.5 * (g.sigma.b + g.sigma.c) * inv;
    e.inv_d = g.sigma.a * inv;
    e.log_norm = -kLog2Pi - 0.5 * std::log(det);
    return e;
}

double gaussian_logpdf(Vec2 x, const RoleGaussian& g) {
    return precompute(g).logpdf(x);
}

double frame_log_density(const FrameMatrix& y, const Formation& f) {
    if (y.size() != f.roles.size())
        throw Error(ErrorKind::contract, "frame row count does not match formation");
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += gaussian_logpdf(y[k], f.roles[k]);
    return s;
}

}  // namespace formlab::gausscore
