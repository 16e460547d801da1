#pragma once

// Test-only oracles: brute-force and quadrature reference computations kept
// independent of the library code paths they are used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "formlab/gausscore.hpp"
#include "formlab/linalg.hpp"
#include "formlab/permgmm.hpp"
#include "formlab/rng.hpp"

namespace oracle {

using formlab::FrameMatrix;
using formlab::Mat2;
using formlab::Rng;
using formlab::Vec2;

inline double norm_pdf(double x, double mu, double sd) {
    double z = (x - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

// Midpoint-rule quadrature over [lox,hix] x [loy,hiy].
inline double quad2d(const std::function<double(double, double)>& f, double lox, double hix,
                     double loy, double hiy, int n) {
    double hx = (hix - lox) / n;
    double hy = (hiy - loy) / n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = lox + (i + 0.5) * hx;
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            double y = loy + (j + 0.5) * hy;
            row += f(x, y);
        }
        acc += row * hy;
    }
    return acc * hx;
}

// Bhattacharyya coefficient of two 2D Gaussians by direct quadrature of
// sqrt(f1 f2).
inline double bhattacharyya_quadrature(const formlab::gausscore::RoleGaussian& g1,
                                       const formlab::gausscore::RoleGaussian& g2) {
    auto pdf = [](const formlab::gausscore::RoleGaussian& g, double x, double y) {
        double det = g.sigma.det();
        double inv_a = g.sigma.d / det, inv_b = -g.sigma.b / det, inv_d = g.sigma.a / det;
        double dx = x - g.mu.x, dy = y - g.mu.y;
        double q = dx * (inv_a * dx + inv_b * dy) + dy * (inv_b * dx + inv_d * dy);
        return std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det));
    };
    double cx = 0.5 * (g1.mu.x + g2.mu.x);
    double cy = 0.5 * (g1.mu.y + g2.mu.y);
    double spread = std::abs(g1.mu.x - g2.mu.x) + std::abs(g1.mu.y - g2.mu.y) +
                    10.0 * std::sqrt(std::max(g1.sigma.trace(), g2.sigma.trace()));
    return quad2d(
        [&](double x, double y) { return std::sqrt(pdf(g1, x, y) * pdf(g2, x, y)); },
        cx - spread, cx + spread, cy - spread, cy + spread, 900);
}

// Two-role model with swap probability: roles N((a1,0), diag(s1^2, sy^2))
// and N((a2,0), diag(s2^2, sy^2)) share the y spread, so the overlap between
// Y and (swap)Y reduces to a 2D integral over the x coordinates.
struct TwoRoleModel {
    double a1 = 1.0, a2 = -1.0;
    double s1 = 1.0, s2 = 1.0;
    double sy = 1.0;
    double w_identity = 0.8;  // remainder goes to the swap
};

inline double two_role_overlap_quadrature(const TwoRoleModel& m, int n = 600) {
    double wi = m.w_identity, ws = 1.0 - m.w_identity;
    auto px = [&](double x1, double x2) {
        return wi * norm_pdf(x1, m.a1, m.s1) * norm_pdf(x2, m.a2, m.s2) +
               ws * norm_pdf(x1, m.a2, m.s2) * norm_pdf(x2, m.a1, m.s1);
    };
    double spread = std::abs(m.a1) + std::abs(m.a2) + 9.0 * std::max({m.s1, m.s2, 1.0});
    return quad2d([&](double x1, double x2) { return std::min(px(x1, x2), px(x2, x1)); }, -spread,
                  spread, -spread, spread, n);
}

// Same overlap by full 4D quadrature (no separability assumption); only for
// diagonal per-role covariances and means on the x axis.
struct TwoRoleModel4D {
    Vec2 mu1, mu2;
    Vec2 sd1, sd2;  // per-axis standard deviations
    double w_identity = 0.8;
};

inline double two_role_overlap_quadrature_4d(const TwoRoleModel4D& m, int n = 40) {
    double wi = m.w_identity, ws = 1.0 - m.w_identity;
    auto mode = [&](double x1, double y1, double x2, double y2, const Vec2& mu_a, const Vec2& sd_a,
                    const Vec2& mu_b, const Vec2& sd_b) {
        return norm_pdf(x1, mu_a.x, sd_a.x) * norm_pdf(y1, mu_a.y, sd_a.y) *
               norm_pdf(x2, mu_b.x, sd_b.x) * norm_pdf(y2, mu_b.y, sd_b.y);
    };
    auto p = [&](double x1, double y1, double x2, double y2) {
        return wi * mode(x1, y1, x2, y2, m.mu1, m.sd1, m.mu2, m.sd2) +
               ws * mode(x1, y1, x2, y2, m.mu2, m.sd2, m.mu1, m.sd1);
    };
    double spread = 0.0;
    for (double v : {m.mu1.x, m.mu1.y, m.mu2.x, m.mu2.y}) spread = std::max(spread, std::abs(v));
    for (double v : {m.sd1.x, m.sd1.y, m.sd2.x, m.sd2.y}) spread = std::max(spread, 6.0 * v);
    spread += 3.0;
    double h = 2.0 * spread / n;
    double acc = 0.0;
    for (int i1 = 0; i1 < n; ++i1)
        for (int j1 = 0; j1 < n; ++j1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int j2 = 0; j2 < n; ++j2) {
                    double x1 = -spread + (i1 + 0.5) * h;
                    double y1 = -spread + (j1 + 0.5) * h;
                    double x2 = -spread + (i2 + 0.5) * h;
                    double y2 = -spread + (j2 + 0.5) * h;
                    // swapping players maps (x1,y1,x2,y2) to (x2,y2,x1,y1)
                    acc += std::min(p(x1, y1, x2, y2), p(x2, y2, x1, y1));
                }
    return acc * h * h * h * h;
}

// One dense EM iteration in linear space, enumerating the given support with
// explicit permutation matrices. Mirrors the displayed update formulas with
// no shared machinery beyond the parameter container.
inline formlab::permgmm::RegimeModel naive_em_iteration(
    const std::vector<FrameMatrix>& frames, const formlab::permgmm::RegimeModel& model) {
    using formlab::permgmm::RegimeModel;
    const int R = model.n_regimes();
    const int d = model.d();
    const auto& support = model.regimes[0].perm_dist.support;
    const int S = static_cast<int>(support.size());
    const std::size_t n = frames.size();

    auto dense = [&](int s) {
        std::vector<std::vector<double>> q(d, std::vector<double>(d, 0.0));
        for (int l = 0; l < d; ++l) q[l][support[s].map[l]] = 1.0;
        return q;
    };
    auto qt_y = [&](int s, const FrameMatrix& y) {
        auto q = dense(s);
        FrameMatrix out(d, Vec2{0.0, 0.0});
        for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) {
                out[k].x += q[l][k] * y[l].x;  // (Q^T y)_k
                out[k].y += q[l][k] * y[l].y;
            }
        return out;
    };
    auto gauss = [](Vec2 x, Vec2 mu, const Mat2& sigma) {
        double det = sigma.det();
        double ia = sigma.d / det, ib = -sigma.b / det, id = sigma.a / det;
        double dx = x.x - mu.x, dy = x.y - mu.y;
        double q = dx * (ia * dx + ib * dy) + dy * (ib * dx + id * dy);
        return std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det));
    };
    auto g_density = [&](const FrameMatrix& x, const formlab::gausscore::Formation& f) {
        double acc = 1.0;
        for (int k = 0; k < d; ++k) acc *= gauss(x[k], f.roles[k].mu, f.roles[k].sigma);
        return acc;
    };

    // posteriors
    std::vector<std::vector<std::vector<double>>> joint(
        n, std::vector<std::vector<double>>(R, std::vector<double>(S)));
    std::vector<std::vector<double>> v_post(n, std::vector<double>(R));
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (int r = 0; r < R; ++r) {
            for (int s = 0; s < S; ++s) {
                double term = model.regimes[r].v * model.regimes[r].perm_dist.weights[s] *
                              g_density(qt_y(s, frames[i]), model.regimes[r].formation);
                joint[i][r][s] = term;
                total += term;
            }
        }
        for (int r = 0; r < R; ++r) {
            double vr = 0.0;
            for (int s = 0; s < S; ++s) vr += joint[i][r][s];
            v_post[i][r] = vr / total;
            for (int s = 0; s < S; ++s)
                joint[i][r][s] = vr > 0.0 ? (joint[i][r][s] / total) : 0.0;
            // joint now holds v_ir * w_irQ
        }
    }

    RegimeModel next = model;
    for (int r = 0; r < R; ++r) {
        double denom = 0.0;
        for (std::size_t i = 0; i < n; ++i) denom += v_post[i][r];
        next.regimes[r].v = denom / double(n);
        for (int s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += joint[i][r][s];
            next.regimes[r].perm_dist.weights[s] = acc / denom;
        }
        for (int k = 0; k < d; ++k) {
            Vec2 mu{0.0, 0.0};
            for (std::size_t i = 0; i < n; ++i)
                for (int s = 0; s < S; ++s) {
                    auto qy = qt_y(s, frames[i]);
                    mu += qy[k] * joint[i][r][s];
                }
            mu = mu * (1.0 / denom);
            Mat2 cov;
            for (std::size_t i = 0; i < n; ++i)
                for (int s = 0; s < S; ++s) {
                    auto qy = qt_y(s, frames[i]);
                    Vec2 c = qy[k] - mu;
                    cov = cov + formlab::outer(c, c) * joint[i][r][s];
                }
            next.regimes[r].formation.roles[k].mu = mu;
            next.regimes[r].formation.roles[k].sigma = cov * (1.0 / denom);
        }
    }
    return next;
}

// Sliced Wasserstein distance between two sets of role means, Monte Carlo
// over uniformly random directions.
inline double sliced_wasserstein_mc(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                                    int n_dirs, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = a.size();
    std::vector<double> pa(d), pb(d);
    double acc = 0.0;
    for (int t = 0; t < n_dirs; ++t) {
        double theta = rng.next_double() * M_PI;
        Vec2 u{std::cos(theta), std::sin(theta)};
        for (std::size_t i = 0; i < d; ++i) {
            pa[i] = a[i].dot(u);
            pb[i] = b[i].dot(u);
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        double w2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) w2 += (pa[i] - pb[i]) * (pa[i] - pb[i]);
        acc += w2 / double(d);
    }
    return std::sqrt(acc / double(n_dirs));
}

// Random SPD 2x2 with eigenvalues in [lo, hi].
inline Mat2 random_spd(Rng& rng, double lo, double hi) {
    double l1 = lo + (hi - lo) * rng.next_double();
    double l2 = lo + (hi - lo) * rng.next_double();
    double t = rng.next_double() * M_PI;
    double c = std::cos(t), s = std::sin(t);
    return Mat2{c * c * l1 + s * s * l2, c * s * (l1 - l2), c * s * (l1 - l2),
                s * s * l1 + c * c * l2};
}

}  // namespace oracle
