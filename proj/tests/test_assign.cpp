#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "formlab/assign.hpp"
#include "formlab/rng.hpp"
#include "formlab/simlab.hpp"
#include "support/oracles.hpp"

using namespace formlab;
using namespace formlab::assign;
using gausscore::Permutation;

namespace {

// Exhaustive minimum over all d! permutations; lexicographically smallest
// map wins ties.
Permutation brute_force(const CostMatrix& c) {
    const int d = static_cast<int>(c.size());
    std::vector<int> map(d);
    for (int i = 0; i < d; ++i) map[i] = i;
    Permutation best{map};
    double best_cost = assignment_cost(c, best);
    do {
        Permutation q{map};
        double cost = assignment_cost(c, q);
        if (cost < best_cost - 1e-12) {
            best = q;
            best_cost = cost;
        }
    } while (std::next_permutation(map.begin(), map.end()));
    return best;
}

}  // namespace

TEST_CASE("two by two examples") {
    CHECK(hungarian({{1, 2}, {2, 1}}) == Permutation::identity(2));
    CHECK(hungarian({{2, 1}, {1, 2}}) == Permutation{{1, 0}});
    CHECK(assignment_cost({{1, 2}, {2, 1}}, hungarian({{1, 2}, {2, 1}})) == 2.0);
}

TEST_CASE("matches exhaustive search on random 7x7 integer matrices") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        CostMatrix c(7, std::vector<double>(7));
        for (auto& row : c)
            for (auto& x : row) x = double(rng.next_below(20));
        auto got = hungarian(c);
        auto want = brute_force(c);
        CHECK(assignment_cost(c, got) == assignment_cost(c, want));
        // small integer costs tie often; the result must be the lex-smallest
        CHECK(got.map == want.map);
    }
}

TEST_CASE("tie-breaking picks the lexicographically smallest matching") {
    CostMatrix flat(4, std::vector<double>(4, 3.0));
    CHECK(hungarian(flat) == Permutation::identity(4));

    // both anti-diagonal and diagonal are optimal here
    CostMatrix c{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    auto q = hungarian(c);
    CHECK(assignment_cost(c, q) == 0.0);
    CHECK(q == brute_force(c));
}

TEST_CASE("hungarian beats random permutations") {
    Rng rng(9);
    CostMatrix c(8, std::vector<double>(8));
    for (auto& row : c)
        for (auto& x : row) x = rng.next_gaussian();
    double best = assignment_cost(c, hungarian(c));
    std::vector<int> map(8);
    for (int i = 0; i < 8; ++i) map[i] = i;
    for (int t = 0; t < 1000; ++t) {
        std::vector<int> shuffled = map;
        Rng r2(derive_seed(9, t));
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[r2.next_below(i)]);
        CHECK(best <= assignment_cost(c, Permutation{shuffled}) + 1e-12);
    }
}

TEST_CASE("non-finite or non-square costs are rejected") {
    CHECK_THROWS_AS(hungarian({{1.0, std::nan("")}, {1.0, 2.0}}), Error);
    CHECK_THROWS_AS(hungarian({{1.0, 2.0}}), Error);
}

TEST_CASE("hard assignment on separated no-swap data reduces to player moments") {
    permgmm::RegimeModel gen;
    permgmm::Regime regime;
    regime.formation.roles = {
        gausscore::RoleGaussian{{-6.0, 0.0}, Mat2::identity()},
        gausscore::RoleGaussian{{0.0, 6.0}, Mat2::identity()},
        gausscore::RoleGaussian{{6.0, 0.0}, Mat2::identity()},
    };
    regime.perm_dist.support = {Permutation::identity(3)};
    regime.perm_dist.weights = {1.0};
    regime.perm_dist.identity_index = 0;
    gen.regimes.push_back(regime);

    auto sim = simlab::simulate({gen, 2000, 123});
    auto fit = fit_hard_assignment(sim.frames, 100, 1e-9);

    std::vector<Vec2> mean(3);
    for (const auto& y : sim.frames)
        for (int k = 0; k < 3; ++k) mean[k] += y[k];
    for (auto& m : mean) m = m * (1.0 / 2000.0);
    for (int k = 0; k < 3; ++k) {
        CHECK(fit.formation.roles[k].mu.x == doctest::Approx(mean[k].x).epsilon(1e-6));
        CHECK(fit.formation.roles[k].mu.y == doctest::Approx(mean[k].y).epsilon(1e-6));
    }
}

TEST_CASE("hard assignment objective is non-decreasing") {
    permgmm::RegimeModel gen;
    permgmm::Regime regime;
    regime.formation.roles = {
        gausscore::RoleGaussian{{0.4, 0.0}, Mat2::identity()},
        gausscore::RoleGaussian{{-0.4, 0.0}, Mat2::identity()},
    };
    regime.perm_dist.support = {Permutation::identity(2), Permutation{{1, 0}}};
    regime.perm_dist.weights = {0.8, 0.2};
    regime.perm_dist.identity_index = 0;
    gen.regimes.push_back(regime);

    auto sim = simlab::simulate({gen, 1500, 77});
    auto fit = fit_hard_assignment(sim.frames, 60, 1e-10);
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
        CHECK(fit.objective_trace[i] >= fit.objective_trace[i - 1] - 1e-9);
}
