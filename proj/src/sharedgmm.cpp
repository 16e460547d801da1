#include "formlab/sharedgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "formlab/rng.hpp"

namespace formlab::sharedgmm {

using gausscore::GaussianEval;
using gausscore::make_role;
using gausscore::precompute;

IndependentDataset build_independent_dataset(const std::vector<FrameMatrix>& frames,
                                             std::uint64_t seed) {
    if (frames.empty()) throw Error(ErrorKind::insufficient_data, "no frames");
    const std::size_t d = frames[0].size();
    const std::size_t n = frames.size();
    if (n < d)
        throw Error(ErrorKind::insufficient_data,
                    "need at least d frames to build the independent dataset");

    const std::size_t per_player = n / d;
    const std::size_t used = d * per_player;

    // Uniform random partition of the first d*floor(n/d) frame indices into
    // d equal player subsets.
    std::vector<std::uint32_t> idx(used);
    std::iota(idx.begin(), idx.end(), 0u);
    Rng rng(seed);
    rng.shuffle(idx);

    IndependentDataset ds;
    ds.z.resize(per_player, FrameMatrix(d));
    ds.source_index.resize(per_player, std::vector<std::uint32_t>(d));
    for (std::size_t l = 0; l < d; ++l) {
        for (std::size_t j = 0; j < per_player; ++j) {
            std::uint32_t src = idx[l * per_player + j];
            ds.z[j][l] = frames[src][l];
            ds.source_index[j][l] = src;
        }
    }
    return ds;
}

SharedFit init_shared(const std::vector<FrameMatrix>& frames) {
    if (frames.empty()) throw Error(ErrorKind::insufficient_data, "no frames");
    const std::size_t d = frames[0].size();
    const double n = static_cast<double>(frames.size());

    SharedFit fit;
    fit.formation.roles.resize(d);
    std::vector<Vec2> mean(d);
    for (const auto& y : frames)
        for (std::size_t k = 0; k < d; ++k) mean[k] += y[k];
    for (auto& m : mean) m = m * (1.0 / n);
    std::vector<Mat2> cov(d);
    for (const auto& y : frames)
        for (std::size_t k = 0; k < d; ++k)
            cov[k] = cov[k] + outer(y[k] - mean[k], y[k] - mean[k]);
    for (std::size_t k = 0; k < d; ++k)
        fit.formation.roles[k] = make_role(mean[k], cov[k] * (1.0 / n));

    // pi[l][l] = 0.5, remainder spread evenly (0.05 each at d = 11).
    fit.pi.assign(d, std::vector<double>(d, d > 1 ? 0.5 / double(d - 1) : 0.0));
    for (std::size_t l = 0; l < d; ++l) fit.pi[l][l] = d > 1 ? 0.5 : 1.0;
    return fit;
}

SharedFit fit_shared_gmm(const IndependentDataset& ds, const SharedFit& init, int max_iter,
                         double tol) {
    if (ds.z.empty()) throw Error(ErrorKind::insufficient_data, "empty independent dataset");
    const std::size_t d = ds.z[0].size();
    const std::size_t m = ds.z.size();

    SharedFit fit = init;
    fit.loglik_trace.clear();
    fit.n_constructed = m;
    fit.reseed_events = 0;

    // Pooled covariance, used when a dead component is reseeded.
    Mat2 pooled;
    {
        Vec2 gm;
        for (const auto& z : ds.z)
            for (const auto& p : z) gm += p;
        gm = gm * (1.0 / double(m * d));
        for (const auto& z : ds.z)
            for (const auto& p : z) pooled = pooled + outer(p - gm, p - gm);
        pooled = pooled * (1.0 / double(m * d));
    }

    std::vector<std::vector<double>> log_pi(d, std::vector<double>(d));
    std::vector<double> resp(d);  // responsibilities of one (j, l) observation
    std::vector<std::vector<double>> resp_sum(d, std::vector<double>(d));  // per (l, k)
    std::vector<Vec2> mu_acc(d);
    std::vector<Mat2> cov_acc(d);
    std::vector<double> tau(d);

    double prev = 0.0;
    for (int it = 0;; ++it) {
        std::vector<GaussianEval> eval;
        eval.reserve(d);
        for (const auto& role : fit.formation.roles) eval.push_back(precompute(role));
        for (std::size_t l = 0; l < d; ++l)
            for (std::size_t k = 0; k < d; ++k)
                log_pi[l][k] = fit.pi[l][k] > 0.0 ? std::log(fit.pi[l][k])
                                                  : -std::numeric_limits<double>::infinity();

        // E-step + accumulation in one sweep.
        for (auto& row : resp_sum) std::fill(row.begin(), row.end(), 0.0);
        std::fill(mu_acc.begin(), mu_acc.end(), Vec2{});
        std::fill(tau.begin(), tau.end(), 0.0);
        double loglik = 0.0;
        double worst_ll = std::numeric_limits<double>::infinity();
        Vec2 worst_point;
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t l = 0; l < d; ++l) {
                Vec2 z = ds.z[j][l];
                for (std::size_t k = 0; k < d; ++k) resp[k] = log_pi[l][k] + eval[k].logpdf(z);
                double lse = log_sum_exp(resp);
                loglik += lse;
                if (lse < worst_ll) {
                    worst_ll = lse;
                    worst_point = z;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double r = std::exp(resp[k] - lse);
                    resp_sum[l][k] += r;
                    tau[k] += r;
                    mu_acc[k] += z * r;
                }
            }
        }
        loglik /= double(m);
        fit.loglik_trace.push_back(loglik);
        if (it > 0 && std::abs(loglik - prev) < tol) break;
        if (it >= max_iter) break;
        prev = loglik;

        // M-step: means first, covariances around the new means.
        std::vector<char> dead(d, 0);
        for (std::size_t k = 0; k < d; ++k) {
            if (tau[k] < 1e-10) {
                dead[k] = 1;
                continue;
            }
            fit.formation.roles[k].mu = mu_acc[k] * (1.0 / tau[k]);
        }
        std::fill(cov_acc.begin(), cov_acc.end(), Mat2{});
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t l = 0; l < d; ++l) {
                Vec2 z = ds.z[j][l];
                for (std::size_t k = 0; k < d; ++k) resp[k] = log_pi[l][k] + eval[k].logpdf(z);
                double lse = log_sum_exp(resp);
                for (std::size_t k = 0; k < d; ++k) {
                    double r = std::exp(resp[k] - lse);
                    Vec2 c = z - fit.formation.roles[k].mu;
                    cov_acc[k] = cov_acc[k] + outer(c, c) * r;
                }
            }
        }
        for (std::size_t k = 0; k < d; ++k) {
            if (dead[k]) {
                // Reseed a component no observation claims at the worst
                // explained point, with pooled spread.
                fit.formation.roles[k] = make_role(worst_point, pooled);
                for (std::size_t l = 0; l < d; ++l) resp_sum[l][k] = 0.01 * double(m);
                ++fit.reseed_events;
                continue;
            }
            fit.formation.roles[k] =
                make_role(fit.formation.roles[k].mu, cov_acc[k] * (1.0 / tau[k]));
        }
        for (std::size_t l = 0; l < d; ++l) {
            double row = 0.0;
            for (std::size_t k = 0; k < d; ++k) row += resp_sum[l][k];
            for (std::size_t k = 0; k < d; ++k) fit.pi[l][k] = resp_sum[l][k] / row;
        }
    }
    return fit;
}

}  // namespace formlab::sharedgmm
