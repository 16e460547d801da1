#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "formlab/permgmm.hpp"
#include "formlab/simlab.hpp"
#include "support/oracles.hpp"

using namespace formlab;
using namespace formlab::permgmm;
using gausscore::Permutation;
using gausscore::RoleGaussian;

namespace {

RegimeModel one_regime(std::vector<RoleGaussian> roles, std::vector<Permutation> support,
                       std::vector<double> weights) {
    RegimeModel model;
    Regime regime;
    regime.formation.roles = std::move(roles);
    regime.perm_dist.support = std::move(support);
    regime.perm_dist.weights = std::move(weights);
    for (std::size_t s = 0; s < regime.perm_dist.support.size(); ++s)
        if (regime.perm_dist.support[s].is_identity())
            regime.perm_dist.identity_index = static_cast<int>(s);
    regime.v = 1.0;
    model.regimes.push_back(std::move(regime));
    return model;
}

RegimeModel random_fixture(int d, int regimes, int support_size, std::uint64_t seed) {
    Rng rng(seed);
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
    RegimeModel model;
    for (int r = 0; r < regimes; ++r) {
        Regime regime;
        for (int k = 0; k < d; ++k)
            regime.formation.roles.push_back(RoleGaussian{
                {3.0 * rng.next_gaussian() + 2.0 * r, 3.0 * rng.next_gaussian() - r},
                oracle::random_spd(rng, 0.4, 1.5)});
        regime.perm_dist.support = support;
        regime.perm_dist.identity_index = 0;
        double total = 0.0;
        for (int s = 0; s < support_size; ++s) {
            regime.perm_dist.weights.push_back(0.2 + rng.next_double());
            total += regime.perm_dist.weights.back();
        }
        for (auto& w : regime.perm_dist.weights) w /= total;
        regime.v = 1.0 / regimes;
        model.regimes.push_back(std::move(regime));
    }
    return model;
}

}  // namespace

TEST_CASE("e_step with identity-only support is degenerate") {
    auto model = one_regime({RoleGaussian{{0, 0}, Mat2::identity()},
                             RoleGaussian{{3, 0}, Mat2::identity()}},
                            {Permutation::identity(2)}, {1.0});
    std::vector<FrameMatrix> frames{{{0.1, 0.0}, {2.9, 0.1}}, {{-0.4, 0.2}, {3.3, -0.2}}};
    auto es = e_step(frames, model);
    for (const auto& post : es.posteriors) {
        CHECK(post.v_ir[0] == 1.0);
        CHECK(post.w_irQ[0][0] == 1.0);
    }
}

TEST_CASE("identical regimes fall back to the prior") {
    RegimeModel model;
    for (int r = 0; r < 2; ++r) {
        Regime regime;
        regime.formation.roles = {RoleGaussian{{0, 0}, Mat2::identity()},
                                  RoleGaussian{{2, 1}, Mat2::identity()}};
        regime.perm_dist.support = {Permutation::identity(2)};
        regime.perm_dist.weights = {1.0};
        regime.perm_dist.identity_index = 0;
        regime.v = r == 0 ? 0.3 : 0.7;
        model.regimes.push_back(regime);
    }
    std::vector<FrameMatrix> frames{{{0.5, 0.0}, {1.8, 1.2}}};
    auto es = e_step(frames, model);
    CHECK(es.posteriors[0].v_ir[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(es.posteriors[0].v_ir[1] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("posteriors match a hand Bayes computation at d=2") {
    auto model = one_regime({RoleGaussian{{1, 0}, Mat2::identity()},
                             RoleGaussian{{-1, 0}, Mat2::identity()}},
                            {Permutation::identity(2), Permutation{{1, 0}}}, {0.8, 0.2});
    FrameMatrix y{{0.6, 0.3}, {-0.9, -0.1}};

    // scalar arithmetic: unnormalized weights w_Q * g(Q^T y)
    auto phi = [](Vec2 x, Vec2 mu) {
        double dx = x.x - mu.x, dy = x.y - mu.y;
        return std::exp(-0.5 * (dx * dx + dy * dy)) / (2.0 * M_PI);
    };
    double g_id = phi(y[0], {1, 0}) * phi(y[1], {-1, 0});
    double g_sw = phi(y[1], {1, 0}) * phi(y[0], {-1, 0});
    double num_id = 0.8 * g_id, num_sw = 0.2 * g_sw;

    auto es = e_step({y}, model);
    CHECK(es.posteriors[0].w_irQ[0][0] ==
          doctest::Approx(num_id / (num_id + num_sw)).epsilon(1e-9));
    CHECK(es.posteriors[0].w_irQ[0][1] ==
          doctest::Approx(num_sw / (num_id + num_sw)).epsilon(1e-9));
    CHECK(es.posteriors[0].log_like == doctest::Approx(std::log(num_id + num_sw)).epsilon(1e-9));
}

TEST_CASE("posterior normalizers reconstruct the frame likelihood") {
    auto model = random_fixture(3, 2, 4, 21);
    Rng rng(22);
    for (int t = 0; t < 5; ++t) {
        FrameMatrix y(3);
        for (auto& p : y) p = Vec2{3.0 * rng.next_gaussian(), 3.0 * rng.next_gaussian()};
        auto es = e_step({y}, model);

        // direct linear-space evaluation of the mixture likelihood
        double direct = 0.0;
        for (const auto& regime : model.regimes) {
            for (std::size_t s = 0; s < regime.perm_dist.support.size(); ++s) {
                auto qy = gausscore::apply_permutation(regime.perm_dist.support[s], y);
                direct += regime.v * regime.perm_dist.weights[s] *
                          std::exp(gausscore::frame_log_density(qy, regime.formation));
            }
        }
        CHECK(es.posteriors[0].log_like == doctest::Approx(std::log(direct)).epsilon(1e-9));
    }
}

TEST_CASE("m_step with identity support is the Gaussian MLE") {
    auto model = one_regime({RoleGaussian{{0, 0}, Mat2::identity()},
                             RoleGaussian{{5, 5}, Mat2::identity()}},
                            {Permutation::identity(2)}, {1.0});
    Rng rng(4);
    std::vector<FrameMatrix> frames(300, FrameMatrix(2));
    for (auto& y : frames) {
        y[0] = Vec2{0.2 * rng.next_gaussian(), 0.3 * rng.next_gaussian()};
        y[1] = Vec2{5.0 + 0.4 * rng.next_gaussian(), 5.0 + 0.1 * rng.next_gaussian()};
    }
    auto es = e_step(frames, model);
    auto next = m_step(frames, es.posteriors, model);

    Vec2 mean0{};
    for (const auto& y : frames) mean0 += y[0];
    mean0 = mean0 * (1.0 / 300.0);
    CHECK(next.regimes[0].formation.roles[0].mu.x == doctest::Approx(mean0.x).epsilon(1e-12));
    CHECK(next.regimes[0].formation.roles[0].mu.y == doctest::Approx(mean0.y).epsilon(1e-12));
    CHECK(next.regimes[0].v == 1.0);
}

TEST_CASE("one EM iteration matches the dense naive implementation") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        auto model = random_fixture(3, 1, 6, seed);  // all 3! permutations
        REQUIRE(model.regimes[0].perm_dist.support.size() == 6);
        Rng rng(seed + 100);
        std::vector<FrameMatrix> frames(40, FrameMatrix(3));
        for (auto& y : frames)
            for (auto& p : y) p = Vec2{2.0 * rng.next_gaussian(), 2.0 * rng.next_gaussian()};

        auto es = e_step(frames, model);
        FitOptions opts;
        opts.prune_threshold = 0.0;  // keep supports aligned with the oracle
        auto fast = m_step(frames, es.posteriors, model, opts);
        auto naive = oracle::naive_em_iteration(frames, model);

        for (int r = 0; r < model.n_regimes(); ++r) {
            CHECK(fast.regimes[r].v == doctest::Approx(naive.regimes[r].v).epsilon(1e-12));
            for (std::size_t s = 0; s < model.regimes[r].perm_dist.support.size(); ++s)
                CHECK(fast.regimes[r].perm_dist.weights[s] ==
                      doctest::Approx(naive.regimes[r].perm_dist.weights[s]).epsilon(1e-12));
            for (int k = 0; k < 3; ++k) {
                const auto& a = fast.regimes[r].formation.roles[k];
                const auto& b = naive.regimes[r].formation.roles[k];
                CHECK(a.mu.x == doctest::Approx(b.mu.x).epsilon(1e-12));
                CHECK(a.mu.y == doctest::Approx(b.mu.y).epsilon(1e-12));
                CHECK(a.sigma.a == doctest::Approx(b.sigma.a).epsilon(1e-12));
                CHECK(a.sigma.b == doctest::Approx(b.sigma.b).epsilon(1e-12));
                CHECK(a.sigma.d == doctest::Approx(b.sigma.d).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("fit recovers a planted one-regime model") {
    RegimeModel gen = one_regime({RoleGaussian{{-3, 0}, Mat2::identity()},
                                  RoleGaussian{{3, 0}, Mat2::identity()}},
                                 {Permutation::identity(2), Permutation{{1, 0}}}, {0.8, 0.2});
    auto sim = simlab::simulate({gen, 5000, 2024});

    auto init = one_regime({RoleGaussian{{-2, 0.5}, Mat2::identity()},
                            RoleGaussian{{2, -0.5}, Mat2::identity()}},
                           {Permutation::identity(2), Permutation{{1, 0}}}, {0.6, 0.4});
    auto fitted = fit(sim.frames, init);

    CHECK(fitted.regimes[0].perm_dist.weights[0] == doctest::Approx(0.8).epsilon(0.05));
    CHECK(fitted.regimes[0].perm_dist.weights[1] == doctest::Approx(0.2).epsilon(0.2));
    CHECK(fitted.regimes[0].formation.roles[0].mu.x == doctest::Approx(-3.0).epsilon(0.02));
    CHECK(fitted.regimes[0].formation.roles[1].mu.x == doctest::Approx(3.0).epsilon(0.02));

    // monotone trace
    for (std::size_t i = 1; i < fitted.loglik_trace.size(); ++i)
        CHECK(fitted.loglik_trace[i] >= fitted.loglik_trace[i - 1] - 1e-9);
}

TEST_CASE("infinite tolerance stops after one iteration") {
    auto model = random_fixture(2, 1, 2, 3);
    auto sim = simlab::simulate({model, 200, 5});
    FitOptions opts;
    opts.tol = std::numeric_limits<double>::infinity();
    auto fitted = fit(sim.frames, model, opts);
    CHECK(fitted.loglik_trace.size() == 2);
}

TEST_CASE("avg_permutation expands the weighted support") {
    SUBCASE("identity only") {
        auto model = one_regime({RoleGaussian{{0, 0}, Mat2::identity()},
                                 RoleGaussian{{1, 1}, Mat2::identity()}},
                                {Permutation::identity(2)}, {1.0});
        auto m = avg_permutation(model, 0);
        CHECK(m[0][0] == 1.0);
        CHECK(m[0][1] == 0.0);
        CHECK(m[1][1] == 1.0);
    }
    SUBCASE("identity plus swap at d=3") {
        auto model = one_regime({RoleGaussian{{0, 0}, Mat2::identity()},
                                 RoleGaussian{{1, 1}, Mat2::identity()},
                                 RoleGaussian{{2, 2}, Mat2::identity()}},
                                {Permutation::identity(3), Permutation{{1, 0, 2}}}, {0.8, 0.2});
        auto m = avg_permutation(model, 0);
        CHECK(m[0][0] == doctest::Approx(0.8));
        CHECK(m[0][1] == doctest::Approx(0.2));
        CHECK(m[1][0] == doctest::Approx(0.2));
        CHECK(m[2][2] == doctest::Approx(1.0));
    }
    SUBCASE("rows and columns sum to one for random weights") {
        auto model = random_fixture(3, 1, 6, 77);
        auto m = avg_permutation(model, 0);
        for (int i = 0; i < 3; ++i) {
            double row = 0.0, col = 0.0;
            for (int j = 0; j < 3; ++j) {
                row += m[i][j];
                col += m[j][i];
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("frame posteriors from a fitted model") {
    auto model = random_fixture(2, 1, 2, 8);
    FrameMatrix y{{0.2, 0.1}, {1.0, -0.4}};
    auto v = frame_regime_prob(model, y);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == 1.0);
    auto w = frame_perm_prob(model, y, 0);
    double sum = 0.0;
    for (double x : w) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("well-separated regimes give near-certain regime posteriors") {
    RegimeModel model;
    for (int r = 0; r < 2; ++r) {
        Regime regime;
        double center = r == 0 ? 0.0 : 40.0;
        regime.formation.roles = {
            RoleGaussian{{center, 0.0}, Mat2::identity() * 0.04},
            RoleGaussian{{center + 2.0, 0.0}, Mat2::identity() * 0.04}};
        regime.perm_dist.support = {Permutation::identity(2)};
        regime.perm_dist.weights = {1.0};
        regime.perm_dist.identity_index = 0;
        regime.v = 0.5;
        model.regimes.push_back(regime);
    }
    FrameMatrix at_mode{{0.0, 0.0}, {2.0, 0.0}};
    auto v = frame_regime_prob(model, at_mode);
    CHECK(v[0] > 0.999);
}

TEST_CASE("no_swap_probability") {
    SUBCASE("identity-only support gives 1") {
        auto model = one_regime({RoleGaussian{{0, 0}, Mat2::identity()},
                                 RoleGaussian{{4, 0}, Mat2::identity()}},
                                {Permutation::identity(2)}, {1.0});
        auto sim = simlab::simulate({model, 100, 6});
        CHECK(no_swap_probability(model, sim.frames) == doctest::Approx(1.0));
    }
    SUBCASE("matches the planted identity weight when separated") {
        auto gen = one_regime({RoleGaussian{{-4, 0}, Mat2::identity()},
                               RoleGaussian{{4, 0}, Mat2::identity()}},
                              {Permutation::identity(2), Permutation{{1, 0}}}, {0.8, 0.2});
        auto sim = simlab::simulate({gen, 8000, 7});
        CHECK(no_swap_probability(gen, sim.frames) == doctest::Approx(0.8).epsilon(0.04));
    }
    SUBCASE("segment aggregation weights by frame count") {
        CHECK(weighted_no_swap({1.0, 0.0}, {100, 300}) == doctest::Approx(0.25));
    }
}

TEST_CASE("role relabeling with remapped weights leaves the likelihood unchanged") {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        auto model = random_fixture(3, 2, 3, seed);
        auto sim = simlab::simulate({model, 150, seed + 1});

        Permutation rho{{2, 0, 1}};
        auto relabeled = relabel_roles(model, rho);

        auto a = e_step(sim.frames, model);
        auto b = e_step(sim.frames, relabeled);
        CHECK(a.mean_loglik == doctest::Approx(b.mean_loglik).epsilon(1e-9));
    }
}

TEST_CASE("pruning drops vanishing weights without moving the likelihood") {
    auto model = one_regime({RoleGaussian{{-5, 0}, Mat2::identity()},
                             RoleGaussian{{5, 0}, Mat2::identity()}},
                            {Permutation::identity(2), Permutation{{1, 0}}}, {1.0 - 1e-13, 1e-13});
    auto sim = simlab::simulate({model, 400, 9});

    auto before = e_step(sim.frames, model);
    auto next = m_step(sim.frames, before.posteriors, model);
    // the vanished swap is pruned from the shared support
    CHECK(next.regimes[0].perm_dist.support.size() == 1);
    CHECK(next.regimes[0].perm_dist.support[0].is_identity());

    // likelihood unaffected by the pruning step itself
    auto pruned_model = next;
    pruned_model.regimes[0].formation = model.regimes[0].formation;  // isolate the prune
    auto after = e_step(sim.frames, pruned_model);
    CHECK(std::abs(after.mean_loglik - before.mean_loglik) <= 1e-8);
}

TEST_CASE("non-finite frames are flagged and excluded from the M-step") {
    auto model = one_regime({RoleGaussian{{0, 0}, Mat2::identity()},
                             RoleGaussian{{4, 0}, Mat2::identity()}},
                            {Permutation::identity(2)}, {1.0});
    auto sim = simlab::simulate({model, 50, 3});
    auto frames = sim.frames;
    frames.push_back({{std::numeric_limits<double>::infinity(), 0.0}, {4.0, 0.0}});

    auto es = e_step(frames, model);
    CHECK(es.underflow_count == 1);
    CHECK(es.posteriors.back().underflow);
    CHECK(std::isfinite(es.mean_loglik));

    auto next = m_step(frames, es.posteriors, model);
    CHECK(std::isfinite(next.regimes[0].formation.roles[0].mu.x));
    CHECK(next.n_frames_fit == 50);
}

TEST_CASE("regime death raises a descriptive error") {
    RegimeModel model;
    for (int r = 0; r < 2; ++r) {
        Regime regime;
        regime.formation.roles = {RoleGaussian{{r == 0 ? 0.0 : 500.0, 0.0}, Mat2::identity()}};
        regime.perm_dist.support = {Permutation::identity(1)};
        regime.perm_dist.weights = {1.0};
        regime.perm_dist.identity_index = 0;
        regime.v = 0.5;
        model.regimes.push_back(regime);
    }
    Rng rng(10);
    std::vector<FrameMatrix> frames(200, FrameMatrix(1));
    for (auto& y : frames) y[0] = Vec2{rng.next_gaussian(), rng.next_gaussian()};
    auto es = e_step(frames, model);
    try {
        m_step(frames, es.posteriors, model);
        FAIL("expected regime death");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("regime 1") != std::string::npos);
    }
}

TEST_CASE("multi-regime initializers") {
    std::vector<Permutation> support{Permutation::identity(2), Permutation{{1, 0}}};
    Rng rng(11);
    std::vector<FrameMatrix> frames(300, FrameMatrix(2));
    for (std::size_t i = 0; i < frames.size(); ++i) {
        double shift = i < 150 ? 0.0 : 6.0;
        frames[i][0] = Vec2{shift + 0.3 * rng.next_gaussian(), 0.3 * rng.next_gaussian()};
        frames[i][1] = Vec2{shift + 2.0 + 0.3 * rng.next_gaussian(), 0.3 * rng.next_gaussian()};
    }

    SUBCASE("identity-half weights") {
        std::vector<Permutation> five = support;
        five.push_back(Permutation{{1, 0}});  // dup would be invalid; build a d=3 case instead
        std::vector<Permutation> support3{
            Permutation::identity(3), Permutation{{1, 0, 2}}, Permutation{{0, 2, 1}},
            Permutation{{2, 1, 0}}, Permutation{{1, 2, 0}}, Permutation{{2, 0, 1}}};
        std::vector<FrameMatrix> frames3(120, FrameMatrix(3, Vec2{0, 0}));
        for (std::size_t i = 0; i < frames3.size(); ++i)
            for (int k = 0; k < 3; ++k)
                frames3[i][k] = Vec2{double(k) + 0.01 * double(i % 13), 0.1 * double(k)};
        MultiInitOptions opts;
        opts.mode = MultiInit::identity_half;
        auto model = init_multi_regime(frames3, {}, support3, 3, opts);
        CHECK(model.regimes.size() == 3);
        for (const auto& regime : model.regimes) {
            CHECK(regime.v == doctest::Approx(1.0 / 3.0));
            CHECK(regime.perm_dist.weights[regime.perm_dist.identity_index] == 0.5);
            // five non-identity candidates share the other half
            CHECK(regime.perm_dist.weights[1] == doctest::Approx(0.1));
        }
    }

    SUBCASE("chronological split uses per-third moments") {
        MultiInitOptions opts;
        opts.mode = MultiInit::chronological_split;
        auto model = init_multi_regime(frames, {}, support, 2, opts);
        CHECK(model.regimes[0].formation.roles[0].mu.x == doctest::Approx(0.0).epsilon(0.2));
        CHECK(model.regimes[1].formation.roles[0].mu.x == doctest::Approx(6.0).epsilon(0.2));
    }

    SUBCASE("possession init needs labels") {
        MultiInitOptions opts;
        opts.mode = MultiInit::from_possession;
        CHECK_THROWS_AS(init_multi_regime(frames, {}, support, 2, opts), Error);
    }

    SUBCASE("possession init seeds regimes from per-subset fits") {
        std::vector<trackio::Possession> poss(frames.size());
        for (std::size_t i = 0; i < poss.size(); ++i)
            poss[i] = i < 150 ? trackio::Possession::home : trackio::Possession::away;
        MultiInitOptions opts;
        opts.mode = MultiInit::from_possession;
        opts.subset_fit.max_iter = 30;
        auto model = init_multi_regime(frames, poss, support, 2, opts);
        CHECK(model.regimes[0].formation.roles[0].mu.x == doctest::Approx(0.0).epsilon(0.3));
        CHECK(model.regimes[1].formation.roles[0].mu.x == doctest::Approx(6.0).epsilon(0.3));
    }
}

TEST_CASE("init_one_regime weights follow the minimum pi entries") {
    sharedgmm::SharedFit shared;
    shared.formation.roles = {RoleGaussian{{0, 0}, Mat2::identity()},
                              RoleGaussian{{1, 0}, Mat2::identity()}};
    shared.pi = {{0.9, 0.1}, {0.1, 0.9}};
    std::vector<Permutation> support{Permutation::identity(2), Permutation{{1, 0}}};
    auto model = init_one_regime(shared, support);
    CHECK(model.regimes[0].perm_dist.weights[0] == doctest::Approx(0.9));
    CHECK(model.regimes[0].perm_dist.weights[1] == doctest::Approx(0.1));

    SUBCASE("all-zero minima fall back to uniform") {
        shared.pi = {{0.0, 1.0}, {0.0, 1.0}};  // both candidates touch a zero entry
        bool uniform = false;
        auto fallback = init_one_regime(shared, support, &uniform);
        CHECK(uniform);
        CHECK(fallback.regimes[0].perm_dist.weights[0] == doctest::Approx(0.5));
    }
}
