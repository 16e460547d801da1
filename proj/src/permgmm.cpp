#include "formlab/permgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "formlab/parallel.hpp"

namespace formlab::permgmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int find_identity(const std::vector<Permutation>& support) {
    for (std::size_t i = 0; i < support.size(); ++i)
        if (support[i].is_identity()) return static_cast<int>(i);
    return -1;
}

void validate(const RegimeModel& model) {
    if (model.regimes.empty()) throw Error(ErrorKind::contract, "model has no regimes");
    const auto& support0 = model.regimes[0].perm_dist.support;
    if (support0.empty()) throw Error(ErrorKind::contract, "empty permutation support");
    for (const auto& regime : model.regimes) {
        if (regime.perm_dist.support.size() != support0.size())
            throw Error(ErrorKind::contract, "regimes must share one support");
        if (regime.perm_dist.weights.size() != regime.perm_dist.support.size())
            throw Error(ErrorKind::contract, "weights/support size mismatch");
    }
}

// Per-regime evaluation tables for one parameter snapshot.
struct RegimeEval {
    std::vector<gausscore::GaussianEval> roles;
    std::vector<double> log_w;
    double log_v;
};

std::vector<RegimeEval> snapshot(const RegimeModel& model) {
    std::vector<RegimeEval> evals;
    evals.reserve(model.regimes.size());
    for (const auto& regime : model.regimes) {
        RegimeEval ev;
        ev.roles.reserve(regime.formation.roles.size());
        for (const auto& role : regime.formation.roles)
            ev.roles.push_back(gausscore::precompute(role));
        ev.log_w.reserve(regime.perm_dist.weights.size());
        for (double w : regime.perm_dist.weights)
            ev.log_w.push_back(w > 0.0 ? std::log(w) : kNegInf);
        ev.log_v = regime.v > 0.0 ? std::log(regime.v) : kNegInf;
        evals.push_back(std::move(ev));
    }
    return evals;
}

// log g(Q^T y; mu_r, Sigma_r) for every Q, via the per-player table
// L[l][k] = log N(y_l; role k).
void perm_log_densities(const FrameMatrix& y, const RegimeEval& ev,
                        const std::vector<Permutation>& support, std::vector<double>& table,
                        std::vector<double>& out) {
    const std::size_t d = y.size();
    for (std::size_t l = 0; l < d; ++l)
        for (std::size_t k = 0; k < d; ++k) table[l * d + k] = ev.roles[k].logpdf(y[l]);
    for (std::size_t s = 0; s < support.size(); ++s) {
        double acc = 0.0;
        const auto& map = support[s].map;
        for (std::size_t l = 0; l < d; ++l) acc += table[l * d + map[l]];
        out[s] = acc;
    }
}

FramePosterior frame_posterior(const FrameMatrix& y, const RegimeModel& model,
                               const std::vector<RegimeEval>& evals) {
    const int n_regimes = model.n_regimes();
    const auto& support = model.regimes[0].perm_dist.support;
    const std::size_t n_support = support.size();
    const std::size_t d = y.size();

    FramePosterior post;
    post.v_ir.assign(n_regimes, 0.0);
    post.w_irQ.assign(n_regimes, std::vector<double>(n_support, 0.0));

    std::vector<double> table(d * d);
    std::vector<double> scores(n_support);
    std::vector<double> regime_score(n_regimes);
    std::vector<std::vector<double>> per_regime(n_regimes, std::vector<double>(n_support));

    for (int r = 0; r < n_regimes; ++r) {
        perm_log_densities(y, evals[r], support, table, scores);
        for (std::size_t s = 0; s < n_support; ++s) scores[s] += evals[r].log_w[s];
        per_regime[r] = scores;
        regime_score[r] = log_sum_exp(scores) + evals[r].log_v;
    }
    post.log_like = log_sum_exp(regime_score);
    if (!std::isfinite(post.log_like)) {
        post.underflow = true;
        return post;
    }
    for (int r = 0; r < n_regimes; ++r) {
        post.v_ir[r] = std::exp(regime_score[r] - post.log_like);
        double lse = log_sum_exp(per_regime[r]);
        if (!std::isfinite(lse)) continue;  // zero-probability regime for this frame
        for (std::size_t s = 0; s < n_support; ++s)
            post.w_irQ[r][s] = std::exp(per_regime[r][s] - lse);
    }
    return post;
}

}  // namespace

EStepResult e_step(const std::vector<FrameMatrix>& frames, const RegimeModel& model, int threads) {
    validate(model);
    auto evals = snapshot(model);

    EStepResult res;
    res.posteriors.resize(frames.size());
    par::parallel_for(frames.size(), threads, [&](std::size_t i) {
        res.posteriors[i] = frame_posterior(frames[i], model, evals);
    });

    struct Acc {
        double loglik = 0.0;
        std::size_t finite = 0;
        std::size_t underflow = 0;
    };
    Acc total = par::map_reduce(
        frames.size(), threads, Acc{},
        [&](Acc& acc, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                if (res.posteriors[i].underflow) {
                    ++acc.underflow;
                } else {
                    acc.loglik += res.posteriors[i].log_like;
                    ++acc.finite;
                }
            }
        },
        [](Acc& a, const Acc& b) {
            a.loglik += b.loglik;
            a.finite += b.finite;
            a.underflow += b.underflow;
        });
    res.underflow_count = total.underflow;
    res.mean_loglik = total.finite > 0 ? total.loglik / double(total.finite) : kNegInf;
    return res;
}

RegimeModel m_step(const std::vector<FrameMatrix>& frames,
                   const std::vector<FramePosterior>& posteriors, const RegimeModel& model,
                   const FitOptions& opts) {
    validate(model);
    if (posteriors.size() != frames.size())
        throw Error(ErrorKind::contract, "posteriors/frames size mismatch");

    const int n_regimes = model.n_regimes();
    const auto& support = model.regimes[0].perm_dist.support;
    const std::size_t n_support = support.size();
    const std::size_t d = frames.empty() ? 0 : frames[0].size();

    std::vector<std::vector<int>> inv_map(n_support);  // role k <- player inv_map[s][k]
    for (std::size_t s = 0; s < n_support; ++s) {
        inv_map[s].resize(d);
        for (std::size_t l = 0; l < d; ++l) inv_map[s][support[s].map[l]] = static_cast<int>(l);
    }

    struct Pass1 {
        std::vector<double> v;       // per regime
        std::vector<double> w;       // per regime x support
        std::vector<Vec2> mu;        // per regime x role
        std::size_t used = 0;
    };
    Pass1 init1;
    init1.v.assign(n_regimes, 0.0);
    init1.w.assign(n_regimes * n_support, 0.0);
    init1.mu.assign(n_regimes * d, Vec2{});

    Pass1 sums = par::map_reduce(
        frames.size(), opts.threads, init1,
        [&](Pass1& acc, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const auto& post = posteriors[i];
                if (post.underflow) continue;
                ++acc.used;
                for (int r = 0; r < n_regimes; ++r) {
                    double vr = post.v_ir[r];
                    acc.v[r] += vr;
                    if (vr == 0.0) continue;
                    for (std::size_t s = 0; s < n_support; ++s) {
                        double vw = vr * post.w_irQ[r][s];
                        if (vw == 0.0) continue;
                        acc.w[r * n_support + s] += vw;
                        for (std::size_t k = 0; k < d; ++k)
                            acc.mu[r * d + k] += frames[i][inv_map[s][k]] * vw;
                    }
                }
            }
        },
        [](Pass1& a, const Pass1& b) {
            for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
            for (std::size_t i = 0; i < a.w.size(); ++i) a.w[i] += b.w[i];
            for (std::size_t i = 0; i < a.mu.size(); ++i) a.mu[i] += b.mu[i];
            a.used += b.used;
        });

    if (sums.used == 0) throw Error(ErrorKind::numeric, "all frames underflowed");
    RegimeModel next = model;
    next.n_frames_fit = sums.used;
    for (int r = 0; r < n_regimes; ++r) {
        if (sums.v[r] < 1e-8 * double(sums.used))
            throw Error(ErrorKind::numeric,
                        "regime " + std::to_string(r) + " collapsed (vanishing responsibility)");
        next.regimes[r].v = sums.v[r] / double(sums.used);
        for (std::size_t s = 0; s < n_support; ++s)
            next.regimes[r].perm_dist.weights[s] = sums.w[r * n_support + s] / sums.v[r];
        for (std::size_t k = 0; k < d; ++k)
            next.regimes[r].formation.roles[k].mu = sums.mu[r * d + k] * (1.0 / sums.v[r]);
    }

    // Second pass: covariances around the updated means.
    std::vector<Mat2> init2(n_regimes * d, Mat2{});
    std::vector<Mat2> cov = par::map_reduce(
        frames.size(), opts.threads, init2,
        [&](std::vector<Mat2>& acc, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const auto& post = posteriors[i];
                if (post.underflow) continue;
                for (int r = 0; r < n_regimes; ++r) {
                    double vr = post.v_ir[r];
                    if (vr == 0.0) continue;
                    for (std::size_t s = 0; s < n_support; ++s) {
                        double vw = vr * post.w_irQ[r][s];
                        if (vw == 0.0) continue;
                        for (std::size_t k = 0; k < d; ++k) {
                            Vec2 c = frames[i][inv_map[s][k]] - next.regimes[r].formation.roles[k].mu;
                            acc[r * d + k] = acc[r * d + k] + outer(c, c) * vw;
                        }
                    }
                }
            }
        },
        [](std::vector<Mat2>& a, const std::vector<Mat2>& b) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] + b[i];
        });

    for (int r = 0; r < n_regimes; ++r)
        for (std::size_t k = 0; k < d; ++k)
            next.regimes[r].formation.roles[k] =
                gausscore::make_role(next.regimes[r].formation.roles[k].mu,
                                     cov[r * d + k] * (1.0 / sums.v[r]), opts.sigma_floor);

    // Prune tiny weights per regime; drop a support entry only when it died
    // everywhere. Identity stays in the support regardless of its weight.
    std::vector<char> keep(n_support, 0);
    for (int r = 0; r < n_regimes; ++r) {
        auto& w = next.regimes[r].perm_dist.weights;
        double total = 0.0;
        for (std::size_t s = 0; s < n_support; ++s) {
            if (w[s] < opts.prune_threshold) w[s] = 0.0;
            total += w[s];
        }
        if (total <= 0.0) throw Error(ErrorKind::numeric, "all permutation weights pruned");
        for (std::size_t s = 0; s < n_support; ++s) {
            w[s] /= total;
            if (w[s] > 0.0) keep[s] = 1;
        }
    }
    int id_idx = find_identity(support);
    if (id_idx >= 0) keep[id_idx] = 1;
    if (std::find(keep.begin(), keep.end(), 0) != keep.end()) {
        for (auto& regime : next.regimes) {
            PermDistribution pruned;
            for (std::size_t s = 0; s < n_support; ++s) {
                if (!keep[s]) continue;
                pruned.support.push_back(regime.perm_dist.support[s]);
                pruned.weights.push_back(regime.perm_dist.weights[s]);
            }
            pruned.identity_index = find_identity(pruned.support);
            regime.perm_dist = std::move(pruned);
        }
    }
    return next;
}

RegimeModel fit(const std::vector<FrameMatrix>& frames, RegimeModel init, const FitOptions& opts) {
    if (frames.empty()) throw Error(ErrorKind::insufficient_data, "no frames to fit");
    validate(init);
    RegimeModel model = std::move(init);
    model.loglik_trace.clear();

    double prev = 0.0;
    for (int it = 0;; ++it) {
        EStepResult es = e_step(frames, model, opts.threads);
        model.loglik_trace.push_back(es.mean_loglik);
        if (it > 0 && std::abs(es.mean_loglik - prev) < opts.tol) break;
        if (it >= opts.max_iter) break;
        prev = es.mean_loglik;
        auto trace = std::move(model.loglik_trace);
        model = m_step(frames, es.posteriors, model, opts);
        model.loglik_trace = std::move(trace);
    }
    model.n_frames_fit = frames.size();
    return model;
}

RegimeModel init_one_regime(const sharedgmm::SharedFit& shared,
                            const std::vector<Permutation>& support, bool* uniform_fallback) {
    if (support.empty()) throw Error(ErrorKind::contract, "empty candidate set");
    Regime regime;
    regime.formation = shared.formation;
    regime.v = 1.0;
    regime.perm_dist.support = support;
    regime.perm_dist.identity_index = find_identity(support);

    double total = 0.0;
    std::vector<double> w(support.size());
    for (std::size_t s = 0; s < support.size(); ++s) {
        double lo = 1.0;
        for (std::size_t l = 0; l < support[s].map.size(); ++l)
            lo = std::min(lo, shared.pi[l][support[s].map[l]]);
        w[s] = lo;
        total += lo;
    }
    if (uniform_fallback) *uniform_fallback = false;
    if (total <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0 / double(support.size()));
        if (uniform_fallback) *uniform_fallback = true;
    } else {
        for (auto& x : w) x /= total;
    }
    regime.perm_dist.weights = std::move(w);

    RegimeModel model;
    model.regimes.push_back(std::move(regime));
    return model;
}

namespace {

Formation moments_formation(const std::vector<FrameMatrix>& frames, std::size_t begin,
                            std::size_t end) {
    const std::size_t d = frames[0].size();
    const double n = double(end - begin);
    std::vector<Vec2> mean(d);
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t k = 0; k < d; ++k) mean[k] += frames[i][k];
    for (auto& m : mean) m = m * (1.0 / n);
    std::vector<Mat2> cov(d);
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t k = 0; k < d; ++k)
            cov[k] = cov[k] + outer(frames[i][k] - mean[k], frames[i][k] - mean[k]);
    Formation f;
    f.roles.reserve(d);
    for (std::size_t k = 0; k < d; ++k)
        f.roles.push_back(gausscore::make_role(mean[k], cov[k] * (1.0 / n)));
    return f;
}

PermDistribution identity_half_weights(const std::vector<Permutation>& support) {
    PermDistribution dist;
    dist.support = support;
    dist.identity_index = find_identity(support);
    if (dist.identity_index < 0)
        throw Error(ErrorKind::contract, "identity-half init needs identity in the support");
    std::size_t others = support.size() - 1;
    dist.weights.assign(support.size(), others > 0 ? 0.5 / double(others) : 0.0);
    dist.weights[dist.identity_index] = others > 0 ? 0.5 : 1.0;
    return dist;
}

PermDistribution uniform_weights(const std::vector<Permutation>& support) {
    PermDistribution dist;
    dist.support = support;
    dist.identity_index = find_identity(support);
    dist.weights.assign(support.size(), 1.0 / double(support.size()));
    return dist;
}

}  // namespace

RegimeModel init_multi_regime(const std::vector<FrameMatrix>& frames,
                              const std::vector<trackio::Possession>& possession,
                              const std::vector<Permutation>& support, int n_regimes,
                              const MultiInitOptions& opts) {
    if (n_regimes < 2) throw Error(ErrorKind::config, "multi-regime init needs l >= 2");
    if (frames.empty()) throw Error(ErrorKind::insufficient_data, "no frames");
    if (support.empty()) throw Error(ErrorKind::contract, "empty candidate set");

    RegimeModel model;
    model.regimes.resize(n_regimes);
    for (auto& regime : model.regimes) regime.v = 1.0 / double(n_regimes);

    switch (opts.mode) {
        case MultiInit::chronological_split:
        case MultiInit::identity_half: {
            // Empirical per-player moments of each chronological l-th.
            for (int r = 0; r < n_regimes; ++r) {
                std::size_t b = frames.size() * r / n_regimes;
                std::size_t e = frames.size() * (r + 1) / n_regimes;
                if (e <= b) throw Error(ErrorKind::insufficient_data, "too few frames to split");
                model.regimes[r].formation = moments_formation(frames, b, e);
                model.regimes[r].perm_dist = opts.mode == MultiInit::identity_half
                                                 ? identity_half_weights(support)
                                                 : uniform_weights(support);
            }
            break;
        }
        case MultiInit::from_possession: {
            if (possession.size() != frames.size())
                throw Error(ErrorKind::config,
                            "possession labels required for from_possession init");
            if (n_regimes > 3)
                throw Error(ErrorKind::config, "from_possession supports at most 3 regimes");
            using trackio::Possession;
            std::vector<std::vector<Possession>> groups;
            if (n_regimes == 2)
                groups = {{Possession::home}, {Possession::away, Possession::unassigned}};
            else
                groups = {{Possession::home}, {Possession::away}, {Possession::unassigned}};
            for (int r = 0; r < n_regimes; ++r) {
                std::vector<FrameMatrix> subset;
                for (std::size_t i = 0; i < frames.size(); ++i)
                    if (std::find(groups[r].begin(), groups[r].end(), possession[i]) !=
                        groups[r].end())
                        subset.push_back(frames[i]);
                if (subset.size() < 2)
                    throw Error(ErrorKind::insufficient_data,
                                "possession subset " + std::to_string(r) + " too small");
                RegimeModel seed;
                seed.regimes.push_back(
                    Regime{moments_formation(subset, 0, subset.size()),
                           identity_half_weights(support), 1.0});
                seed = fit(subset, std::move(seed), opts.subset_fit);
                model.regimes[r] = seed.regimes[0];
                model.regimes[r].v = 1.0 / double(n_regimes);
            }
            // Per-subset pruning may have diverged the supports; reset them
            // to the common candidate set, reusing the fitted weights.
            for (auto& regime : model.regimes) {
                PermDistribution dist = uniform_weights(support);
                for (std::size_t s = 0; s < support.size(); ++s) {
                    dist.weights[s] = 0.0;
                    for (std::size_t t = 0; t < regime.perm_dist.support.size(); ++t)
                        if (regime.perm_dist.support[t] == support[s])
                            dist.weights[s] = regime.perm_dist.weights[t];
                }
                double total = 0.0;
                for (double w : dist.weights) total += w;
                for (auto& w : dist.weights) w /= total;
                regime.perm_dist = dist;
            }
            break;
        }
    }
    return model;
}

std::vector<std::vector<double>> avg_permutation(const RegimeModel& model, int r) {
    if (r < 0 || r >= model.n_regimes()) throw Error(ErrorKind::contract, "regime out of range");
    const auto& dist = model.regimes[r].perm_dist;
    const std::size_t d = model.d();
    std::vector<std::vector<double>> m(d, std::vector<double>(d, 0.0));
    for (std::size_t s = 0; s < dist.support.size(); ++s)
        for (std::size_t l = 0; l < d; ++l) m[l][dist.support[s].map[l]] += dist.weights[s];
    return m;
}

std::vector<double> frame_regime_prob(const RegimeModel& model, const FrameMatrix& y) {
    auto evals = snapshot(model);
    return frame_posterior(y, model, evals).v_ir;
}

std::vector<double> frame_perm_prob(const RegimeModel& model, const FrameMatrix& y, int r) {
    if (r < 0 || r >= model.n_regimes()) throw Error(ErrorKind::contract, "regime out of range");
    auto evals = snapshot(model);
    return frame_posterior(y, model, evals).w_irQ[r];
}

double no_swap_probability(const RegimeModel& model, const std::vector<FrameMatrix>& frames) {
    validate(model);
    if (frames.empty()) throw Error(ErrorKind::insufficient_data, "no frames");
    std::vector<int> id_idx(model.n_regimes());
    for (int r = 0; r < model.n_regimes(); ++r) {
        id_idx[r] = model.regimes[r].perm_dist.identity_index >= 0
                        ? model.regimes[r].perm_dist.identity_index
                        : find_identity(model.regimes[r].perm_dist.support);
        if (id_idx[r] < 0)
            throw Error(ErrorKind::contract, "identity permutation missing from support");
    }
    EStepResult es = e_step(frames, model);
    double acc = 0.0;
    std::size_t used = 0;
    for (const auto& post : es.posteriors) {
        if (post.underflow) continue;
        double p = 0.0;
        for (int r = 0; r < model.n_regimes(); ++r) p += post.v_ir[r] * post.w_irQ[r][id_idx[r]];
        acc += p;
        ++used;
    }
    if (used == 0) throw Error(ErrorKind::numeric, "all frames underflowed");
    return acc / double(used);
}

double weighted_no_swap(const std::vector<double>& values, const std::vector<std::size_t>& counts) {
    if (values.size() != counts.size() || values.empty())
        throw Error(ErrorKind::contract, "values/counts mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        num += values[i] * double(counts[i]);
        den += double(counts[i]);
    }
    return num / den;
}

RegimeModel relabel_roles(const RegimeModel& model, const Permutation& rho) {
    RegimeModel out = model;
    for (std::size_t r = 0; r < model.regimes.size(); ++r) {
        const auto& src = model.regimes[r];
        auto& dst = out.regimes[r];
        for (std::size_t k = 0; k < src.formation.roles.size(); ++k)
            dst.formation.roles[rho.map[k]] = src.formation.roles[k];
        for (std::size_t s = 0; s < src.perm_dist.support.size(); ++s)
            dst.perm_dist.support[s] = compose(rho, src.perm_dist.support[s]);
        dst.perm_dist.identity_index = find_identity(dst.perm_dist.support);
    }
    return out;
}

}  // namespace formlab::permgmm
