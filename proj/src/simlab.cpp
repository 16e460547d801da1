#include "formlab/simlab.hpp"

#include <algorithm>
#include <cmath>

#include "formlab/assign.hpp"
#include "formlab/parallel.hpp"
#include "formlab/rng.hpp"
#include "formlab/sharedgmm.hpp"

namespace formlab::simlab {

using gausscore::Permutation;

namespace {

// Lower Cholesky factor of a 2x2 SPD matrix.
void chol2(const Mat2& s, double& l11, double& l21, double& l22) {
    if (!(s.a > 0.0)) throw Error(ErrorKind::numeric, "covariance not positive definite");
    l11 = std::sqrt(s.a);
    l21 = 0.5 * (s.b + s.c) / l11;
    double rest = s.d - l21 * l21;
    if (!(rest > 0.0)) throw Error(ErrorKind::numeric, "covariance not positive definite");
    l22 = std::sqrt(rest);
}

int sample_categorical(Rng& rng, const std::vector<double>& w) {
    double u = rng.next_double();
    double cum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        cum += w[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
}

}  // namespace

SimResult simulate(const GeneratorSpec& spec) {
    const auto& model = spec.model;
    if (model.regimes.empty()) throw Error(ErrorKind::contract, "generator model has no regimes");
    const int d = model.d();

    std::vector<double> regime_w;
    for (const auto& r : model.regimes) regime_w.push_back(r.v);

    // Per regime and role: precomputed Cholesky factors.
    struct RoleSampler {
        Vec2 mu;
        double l11, l21, l22;
    };
    std::vector<std::vector<RoleSampler>> samplers(model.regimes.size());
    for (std::size_t r = 0; r < model.regimes.size(); ++r) {
        for (const auto& role : model.regimes[r].formation.roles) {
            RoleSampler s;
            s.mu = role.mu;
            chol2(role.sigma, s.l11, s.l21, s.l22);
            samplers[r].push_back(s);
        }
    }

    Rng rng(spec.seed);
    SimResult res;
    res.frames.reserve(spec.n);
    res.regime.reserve(spec.n);
    res.perm_index.reserve(spec.n);
    FrameMatrix roles(d);
    for (std::size_t i = 0; i < spec.n; ++i) {
        int r = sample_categorical(rng, regime_w);
        int s = sample_categorical(rng, model.regimes[r].perm_dist.weights);
        for (int k = 0; k < d; ++k) {
            double g1 = rng.next_gaussian();
            double g2 = rng.next_gaussian();
            const auto& rs = samplers[r][k];
            roles[k] = Vec2{rs.mu.x + rs.l11 * g1, rs.mu.y + rs.l21 * g1 + rs.l22 * g2};
        }
        // Y = Pi X: player l takes the location of its role.
        const auto& map = model.regimes[r].perm_dist.support[s].map;
        FrameMatrix y(d);
        for (int l = 0; l < d; ++l) y[l] = roles[map[l]];
        res.frames.push_back(std::move(y));
        res.regime.push_back(r);
        res.perm_index.push_back(s);
    }
    return res;
}

namespace {

// Squared-error of estimated means against the truth, minimized over role
// relabelings (the model is identifiable only up to one).
double matched_mse(const std::vector<Vec2>& est, const std::vector<Vec2>& truth) {
    const int d = static_cast<int>(truth.size());
    assign::CostMatrix cost(d, std::vector<double>(d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) cost[i][j] = (est[i] - truth[j]).norm2();
    auto q = assign::hungarian(cost);
    return assign::assignment_cost(cost, q) / double(d);
}

struct RepErrors {
    double perm = 0.0;
    double shared = 0.0;
    double hard = 0.0;
};

RepErrors run_one_rep(double delta, double p, std::size_t n, std::uint64_t seed) {
    using permgmm::RegimeModel;
    const std::vector<Vec2> truth = {{delta, 0.0}, {-delta, 0.0}};

    // Ground-truth generator: two unit-covariance roles, swap probability p.
    RegimeModel gen;
    {
        permgmm::Regime regime;
        regime.formation.roles = {gausscore::RoleGaussian{truth[0], Mat2::identity()},
                                  gausscore::RoleGaussian{truth[1], Mat2::identity()}};
        regime.perm_dist.support = {Permutation::identity(2), Permutation{{1, 0}}};
        regime.perm_dist.weights = {1.0 - p, p};
        regime.perm_dist.identity_index = 0;
        regime.v = 1.0;
        gen.regimes.push_back(std::move(regime));
    }
    SimResult sim = simulate({gen, n, derive_seed(seed, 1)});

    RepErrors err;

    // Shared-component GMM on the decorrelated dataset.
    auto ds = sharedgmm::build_independent_dataset(sim.frames, derive_seed(seed, 2));
    auto shared = sharedgmm::fit_shared_gmm(ds, sharedgmm::init_shared(sim.frames), 200, 1e-7);
    err.shared = matched_mse({shared.formation.roles[0].mu, shared.formation.roles[1].mu}, truth);

    // Permutation model, seeded from the shared fit as in the full pipeline.
    auto init = permgmm::init_one_regime(
        shared, {Permutation::identity(2), Permutation{{1, 0}}});
    permgmm::FitOptions opts;
    auto fitted = permgmm::fit(sim.frames, std::move(init), opts);
    err.perm = matched_mse({fitted.regimes[0].formation.roles[0].mu,
                            fitted.regimes[0].formation.roles[1].mu},
                           truth);

    // Hard-assignment baseline.
    auto hard = assign::fit_hard_assignment(sim.frames, 200, 1e-7);
    err.hard = matched_mse({hard.formation.roles[0].mu, hard.formation.roles[1].mu}, truth);
    return err;
}

}  // namespace

std::vector<TwoRoleRow> two_role_experiment(const std::vector<double>& deltas, double p,
                                            std::size_t n, int reps, std::uint64_t seed,
                                            int threads) {
    if (deltas.empty()) throw Error(ErrorKind::config, "empty delta grid");
    if (reps < 1) throw Error(ErrorKind::config, "reps must be >= 1");

    std::vector<TwoRoleRow> rows;
    std::vector<RepErrors> errors(std::size_t(deltas.size()) * reps);
    // One task per (delta, rep); sub-seeds derived from the master seed.
    par::for_chunks(
        errors.size(), threads,
        [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t t = b; t < e; ++t) {
                std::size_t di = t / reps;
                std::size_t rep = t % reps;
                errors[t] = run_one_rep(deltas[di], p, n,
                                        derive_seed(seed, (di << 20) + rep));
            }
        },
        1);

    auto summarize = [&](std::size_t di, const char* method, auto pick) {
        double mean = 0.0;
        for (int rep = 0; rep < reps; ++rep) mean += pick(errors[di * reps + rep]);
        mean /= double(reps);
        double var = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            double dd = pick(errors[di * reps + rep]) - mean;
            var += dd * dd;
        }
        var /= double(reps);
        rows.push_back(TwoRoleRow{deltas[di], method, mean, std::sqrt(var)});
    };
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        summarize(di, "perm", [](const RepErrors& e) { return e.perm; });
        summarize(di, "shared", [](const RepErrors& e) { return e.shared; });
        summarize(di, "hard", [](const RepErrors& e) { return e.hard; });
    }
    return rows;
}

}  // namespace formlab::simlab
