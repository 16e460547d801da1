#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "formlab/permgmm.hpp"
#include "formlab/rng.hpp"

namespace fixtures {

using formlab::Mat2;
using formlab::Rng;
using formlab::Vec2;
using formlab::gausscore::Permutation;
using formlab::gausscore::RoleGaussian;

// Raw tracking CSV in meters from eleven anchored players with block drift
// and one swapping winger pair (players 9 and 11). Rows at and after
// lineup_switch_row carry a second lineup token.
inline void write_fixture_csv(const std::string& path, int rows, std::uint64_t seed,
                              double swap_prob = 0.2, int lineup_switch_row = -1) {
    const double anchors[11][2] = {{-45, 0},   {-30, -20}, {-32, -7}, {-32, 7}, {-30, 20},
                                   {-12, -12}, {-15, 0},   {-12, 12}, {8, -22}, {12, 0},
                                   {8, 22}};
    Rng rng(seed);
    std::ofstream out(path);
    out << "t";
    for (int p = 1; p <= 11; ++p) out << ",player" << p << "_x,player" << p << "_y";
    out << ",possession,lineup\n";
    for (int i = 0; i < rows; ++i) {
        double t = 0.2 * i;
        double drift_x = 12.0 * std::sin(t / 97.0);
        double drift_y = 6.0 * std::cos(t / 61.0);
        bool swap = rng.next_double() < swap_prob;
        out << t;
        for (int p = 0; p < 11; ++p) {
            int role = p;
            if (swap && p == 8) role = 10;
            if (swap && p == 10) role = 8;
            out << ',' << anchors[role][0] + drift_x + 2.0 * rng.next_gaussian() << ','
                << anchors[role][1] + drift_y + 2.0 * rng.next_gaussian();
        }
        const char* lineup = (lineup_switch_row >= 0 && i >= lineup_switch_row) ? "L2" : "L1";
        out << ',' << (i % 3 == 0 ? 'H' : (i % 3 == 1 ? 'A' : 'N')) << ',' << lineup << "\n";
    }
}

// Random multi-regime model with identity plus random support entries.
inline formlab::permgmm::RegimeModel random_model(int d, int regimes, int support_size,
                                                  std::uint64_t seed) {
    using namespace formlab;
    Rng rng(seed);
    int max_support = 1;
    for (int i = 2; i <= d && max_support < support_size; ++i) max_support *= i;
    support_size = std::min(support_size, max_support);
    std::vector<Permutation> support{Permutation::identity(d)};
    while (static_cast<int>(support.size()) < support_size) {
        std::vector<int> map(d);
        for (int i = 0; i < d; ++i) map[i] = i;
        rng.shuffle(map);
        Permutation q{map};
        bool dup = false;
        for (const auto& existing : support) dup |= existing == q;
        if (!dup) support.push_back(q);
    }
    permgmm::RegimeModel model;
    for (int r = 0; r < regimes; ++r) {
        permgmm::Regime regime;
        for (int k = 0; k < d; ++k) {
            double l1 = 0.4 + rng.next_double(), l2 = 0.4 + rng.next_double();
            double t = rng.next_double() * M_PI;
            double c = std::cos(t), s = std::sin(t);
            Mat2 cov{c * c * l1 + s * s * l2, c * s * (l1 - l2), c * s * (l1 - l2),
                     s * s * l1 + c * c * l2};
            regime.formation.roles.push_back(RoleGaussian{
                {3.0 * rng.next_gaussian() + 2.0 * r, 3.0 * rng.next_gaussian() - 1.5 * r}, cov});
        }
        regime.perm_dist.support = support;
        regime.perm_dist.identity_index = 0;
        double total = 0.0;
        for (std::size_t s2 = 0; s2 < support.size(); ++s2) {
            regime.perm_dist.weights.push_back(0.2 + rng.next_double());
            total += regime.perm_dist.weights.back();
        }
        for (auto& w : regime.perm_dist.weights) w /= total;
        regime.v = 1.0 / regimes;
        model.regimes.push_back(std::move(regime));
    }
    return model;
}

}  // namespace fixtures
