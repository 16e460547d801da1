#pragma once

#include <cstdint>
#include <vector>

#include "formlab/linalg.hpp"

namespace formlab::gausscore {

// Eigenvalue floor applied to every fitted covariance.
inline constexpr double kSigmaFloor = 1e-6;

// Bijection on role indices {0..d-1}; map[l] = k means player l occupies
// role k. Equivalent to the d x d matrix Q with Q[l][k] = 1 iff map[l] = k.
struct Permutation {
    std::vector<int> map;

    static Permutation identity(int d);
    int size() const { return static_cast<int>(map.size()); }
    bool is_identity() const;
    bool is_valid() const;

    bool operator==(const Permutation& o) const { return map == o.map; }
    bool operator<(const Permutation& o) const { return map < o.map; }
};

Permutation compose(const Permutation& outer, const Permutation& inner);
Permutation inverse(const Permutation& q);

// Computes Q^T y: output row map[l] is input row l.
FrameMatrix apply_permutation(const Permutation& q, const FrameMatrix& y);

// Block-doubled 2d x 2d permutation matrix acting on flattened frames:
// rows (2l, 2l+1) pick up columns (2*map[l], 2*map[l]+1).
MatX expand_to_coordinates(const Permutation& q);

// Index form of the same action: (Qz)[i] = z[coordinate_sources(q)[i]].
std::vector<int> coordinate_sources(const Permutation& q);

struct RoleGaussian {
    Vec2 mu;
    Mat2 sigma;
};

// Symmetrizes sigma and lifts its smallest eigenvalue to at least the floor.
Mat2 regularize_covariance(const Mat2& sigma, double floor = kSigmaFloor);
RoleGaussian make_role(Vec2 mu, const Mat2& sigma, double floor = kSigmaFloor);

double gaussian_logpdf(Vec2 x, const RoleGaussian& g);

// Precomputed inverse and normalizer for repeated log-density evaluation.
struct GaussianEval {
    Vec2 mu;
    double inv_a, inv_b, inv_d;  // symmetric inverse entries
    double log_norm;             // -log(2*pi) - 0.5*log(det)

    double logpdf(Vec2 x) const {
        double dx = x.x - mu.x;
        double dy = x.y - mu.y;
        double q = dx * (inv_a * dx + inv_b * dy) + dy * (inv_b * dx + inv_d * dy);
        return log_norm - 0.5 * q;
    }
};

GaussianEval precompute(const RoleGaussian& g);

struct Formation {
    std::vector<RoleGaussian> roles;

    int d() const { return static_cast<int>(roles.size()); }
};

double frame_log_density(const FrameMatrix& y, const Formation& f);

}  // namespace formlab::gausscore
