#include "formlab/permselect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "formlab/parallel.hpp"
#include "formlab/rng.hpp"

namespace formlab::permselect {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Acklam's rational approximation of the standard normal inverse CDF.
const double kQuantA[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                           -2.759285104469687e+02, 1.383577518672690e+02,
                           -3.066479806614716e+01, 2.506628277459239e+00};
const double kQuantB[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                           -1.556989798598866e+02, 6.680131188771972e+01,
                           -1.328068155288572e+01};
const double kQuantC[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                           -2.400758277161838e+00, -2.549732539343734e+00,
                           4.374664141464968e+00,  2.938163982698783e+00};
const double kQuantD[4] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                           3.754408661907416e+00};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::contract, "quantile needs p in (0, 1)");
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((kQuantC[0] * q + kQuantC[1]) * q + kQuantC[2]) * q + kQuantC[3]) * q +
              kQuantC[4]) *
                 q +
             kQuantC[5]) /
            ((((kQuantD[0] * q + kQuantD[1]) * q + kQuantD[2]) * q + kQuantD[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((kQuantA[0] * r + kQuantA[1]) * r + kQuantA[2]) * r + kQuantA[3]) * r +
              kQuantA[4]) *
                 r +
             kQuantA[5]) *
            q /
            (((((kQuantB[0] * r + kQuantB[1]) * r + kQuantB[2]) * r + kQuantB[3]) * r +
              kQuantB[4]) *
                 r +
             1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((kQuantC[0] * q + kQuantC[1]) * q + kQuantC[2]) * q + kQuantC[3]) * q +
               kQuantC[4]) *
                  q +
              kQuantC[5]) /
            ((((kQuantD[0] * q + kQuantD[1]) * q + kQuantD[2]) * q + kQuantD[3]) * q + 1.0);
    }
    // One Halley step against erfc sharpens the approximation to ~1e-15.
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

OverlapBound make_bound(double error_rate, std::size_t n_eval, double alpha) {
    OverlapBound b;
    b.error_rate = error_rate;
    b.n_eval = n_eval;
    b.alpha = alpha;
    b.bound = 2.0 * error_rate + normal_quantile(1.0 - alpha) / std::sqrt(2.0 * double(n_eval));
    return b;
}

namespace {

void dfs_candidates(const std::vector<std::vector<double>>& pi, double p_thresh, std::size_t cap,
                    std::size_t row, std::vector<int>& partial, std::vector<char>& used,
                    std::vector<Permutation>& out) {
    const std::size_t d = pi.size();
    if (row == d) {
        if (out.size() >= cap)
            throw Error(ErrorKind::config,
                        "candidate permutations exceed cap (" + std::to_string(cap) +
                            "); raise --p-thresh");
        out.push_back(Permutation{partial});
        return;
    }
    for (std::size_t k = 0; k < d; ++k) {
        if (used[k] || pi[row][k] < p_thresh) continue;
        used[k] = 1;
        partial[row] = static_cast<int>(k);
        dfs_candidates(pi, p_thresh, cap, row + 1, partial, used, out);
        used[k] = 0;
    }
}

}  // namespace

CandidateSet candidates_from_pi(const std::vector<std::vector<double>>& pi, double p_thresh,
                                std::size_t cap) {
    const std::size_t d = pi.size();
    for (const auto& row : pi)
        if (row.size() != d) throw Error(ErrorKind::contract, "pi must be square");

    std::vector<Permutation> perms;
    std::vector<int> partial(d, -1);
    std::vector<char> used(d, 0);
    dfs_candidates(pi, p_thresh, cap, 0, partial, used, perms);

    auto identity = Permutation::identity(static_cast<int>(d));
    if (std::find(perms.begin(), perms.end(), identity) == perms.end())
        perms.insert(perms.begin(), identity);

    CandidateSet set;
    set.perms = std::move(perms);
    set.provenance.resize(set.perms.size());
    for (std::size_t s = 0; s < set.perms.size(); ++s) {
        double lo = 1.0;
        for (std::size_t l = 0; l < d; ++l) lo = std::min(lo, pi[l][set.perms[s].map[l]]);
        set.provenance[s].min_pi_entry = lo;
    }
    return set;
}

VecX flatten_frame(const FrameMatrix& y) {
    VecX v(2 * y.size());
    for (std::size_t l = 0; l < y.size(); ++l) {
        v[2 * l] = y[l].x;
        v[2 * l + 1] = y[l].y;
    }
    return v;
}

std::vector<VecX> flatten_frames(const std::vector<FrameMatrix>& frames) {
    std::vector<VecX> out;
    out.reserve(frames.size());
    for (const auto& y : frames) out.push_back(flatten_frame(y));
    return out;
}

namespace {

// Applies the block-doubled permutation; out[i] = x[src[i]].
VecX permute_vec(const VecX& x, const std::vector<int>& src) {
    VecX out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[src[i]];
    return out;
}

MatX permute_mat(const MatX& m, const std::vector<int>& src) {
    MatX out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(src[i], src[j]);
    return out;
}

// Cholesky with escalating diagonal jitter.
Cholesky factor_regularized(MatX m, const char* what) {
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) mean_diag += m(i, i);
    mean_diag = std::max(mean_diag / double(m.rows()), 1e-30);
    for (double jitter : {0.0, 1e-10, 1e-8, 1e-6, 1e-4}) {
        MatX trial = m;
        for (std::size_t i = 0; i < m.rows(); ++i) trial(i, i) += jitter * mean_diag;
        Cholesky chol(trial);
        if (chol.ok()) return chol;
    }
    throw Error(ErrorKind::numeric, std::string(what) + " covariance is singular");
}

struct GaussEvalX {
    VecX mu;
    Cholesky chol;
    double log_norm;

    GaussEvalX(VecX mu_, const MatX& sigma, const char* what)
        : mu(std::move(mu_)), chol(factor_regularized(sigma, what)) {
        double dim = double(mu.size());
        log_norm = -0.5 * (dim * std::log(2.0 * M_PI) + chol.log_det());
    }

    double logpdf(const VecX& x) const { return log_norm - 0.5 * chol.quad_form(x, mu); }
};

}  // namespace

QdaParams qda_params(const VecX& mu, const MatX& sigma, const Permutation& q) {
    auto src = gausscore::coordinate_sources(q);
    QdaParams p;
    p.mu1 = mu;
    p.sigma1 = sigma;
    p.mu2 = permute_vec(mu, src);
    p.sigma2 = permute_mat(sigma, src);
    return p;
}

QdaParams qda_params_from_frames(const std::vector<VecX>& frames_flat, const Permutation& q) {
    if (frames_flat.empty()) throw Error(ErrorKind::insufficient_data, "no frames");
    const std::size_t dim = frames_flat[0].size();
    VecX mu(dim, 0.0);
    for (const auto& z : frames_flat)
        for (std::size_t i = 0; i < dim; ++i) mu[i] += z[i];
    for (auto& m : mu) m /= double(frames_flat.size());
    MatX sigma(dim, dim);
    for (const auto& z : frames_flat)
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i; j < dim; ++j) sigma(i, j) += (z[i] - mu[i]) * (z[j] - mu[j]);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j) {
            sigma(i, j) /= double(frames_flat.size());
            sigma(j, i) = sigma(i, j);
        }
    return qda_params(mu, sigma, q);
}

OverlapBound qda_error_rate(const std::vector<VecX>& frames_flat, const Permutation& q,
                            const QdaParams& params, double alpha, std::uint64_t split_seed,
                            std::size_t max_eval) {
    std::vector<std::uint32_t> idx(frames_flat.size());
    std::iota(idx.begin(), idx.end(), 0u);
    Rng rng(derive_seed(split_seed, 0x6576616cULL));
    rng.shuffle(idx);
    if (max_eval > 0 && max_eval < idx.size()) idx.resize(max_eval);

    // The two indicator streams must come from disjoint frames: for an
    // involution, Phi(Qz) >= 0 is the complement of Phi(z) < 0, so paired
    // evaluation would double the estimator variance and void the CLT
    // adjustment. One seeded half scores class 1, the other half, permuted,
    // scores class 2; n is the number of independent pairs.
    std::size_t n_pairs = idx.size() / 2;
    if (n_pairs < 100)
        throw Error(ErrorKind::insufficient_data,
                    "overlap bound needs at least 200 evaluation frames");

    GaussEvalX class1(params.mu1, params.sigma1, "pooled");
    GaussEvalX class2(params.mu2, params.sigma2, "permuted");
    auto src = gausscore::coordinate_sources(q);

    std::size_t errors = par::map_reduce(
        n_pairs, 1, std::size_t{0},
        [&](std::size_t& acc, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const VecX& z1 = frames_flat[idx[i]];
                VecX z2 = permute_vec(frames_flat[idx[n_pairs + i]], src);
                if (class1.logpdf(z1) < class2.logpdf(z1)) ++acc;   // Phi(z1) < 0
                if (class1.logpdf(z2) >= class2.logpdf(z2)) ++acc;  // Phi(z2) >= 0
            }
        },
        [](std::size_t& a, std::size_t b) { a += b; });

    return make_bound(double(errors) / (2.0 * double(n_pairs)), n_pairs, alpha);
}

namespace {

struct GmmEval {
    std::vector<double> log_w;
    std::vector<GaussEvalX> comps;

    explicit GmmEval(const GmmModel& m) {
        log_w.reserve(m.weights.size());
        comps.reserve(m.weights.size());
        for (std::size_t s = 0; s < m.weights.size(); ++s) {
            log_w.push_back(m.weights[s] > 0.0 ? std::log(m.weights[s]) : kNegInf);
            comps.emplace_back(m.means[s], m.covs[s], "mixture component");
        }
    }

    double logpdf(const VecX& x) const {
        std::vector<double> terms(comps.size());
        for (std::size_t s = 0; s < comps.size(); ++s) terms[s] = log_w[s] + comps[s].logpdf(x);
        return log_sum_exp(terms);
    }
};

}  // namespace

GmmModel fit_gmm(const std::vector<VecX>& points, int k, std::uint64_t seed, int max_iter,
                 double tol, int threads) {
    if (points.empty()) throw Error(ErrorKind::insufficient_data, "no training points");
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();
    if (static_cast<std::size_t>(k) > n)
        throw Error(ErrorKind::insufficient_data, "more mixture components than points");

    // k-means++ seeding for the means; pooled covariance everywhere.
    Rng rng(seed);
    GmmModel model;
    model.weights.assign(k, 1.0 / double(k));
    std::vector<std::size_t> centers;
    centers.push_back(rng.next_below(n));
    std::vector<double> d2(n, std::numeric_limits<double>::max());
    auto sq_dist = [&](const VecX& a, const VecX& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };
    while (centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(points[i], points[centers.back()]));
            total += d2[i];
        }
        double u = rng.next_double() * total;
        std::size_t pick = n - 1;
        double cum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cum += d2[i];
            if (cum >= u) {
                pick = i;
                break;
            }
        }
        centers.push_back(pick);
    }
    for (std::size_t c : centers) model.means.push_back(points[c]);

    VecX mu(dim, 0.0);
    for (const auto& x : points)
        for (std::size_t i = 0; i < dim; ++i) mu[i] += x[i];
    for (auto& m : mu) m /= double(n);
    MatX pooled(dim, dim);
    for (const auto& x : points)
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i; j < dim; ++j) pooled(i, j) += (x[i] - mu[i]) * (x[j] - mu[j]);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j) {
            pooled(i, j) /= double(n);
            pooled(j, i) = pooled(i, j);
        }
    model.covs.assign(k, pooled);

    struct Acc {
        double loglik = 0.0;
        std::vector<double> w;       // per component
        std::vector<VecX> mean;      // per component
        std::vector<MatX> second;    // per component, E[x x^T] numerator
    };

    double prev = 0.0;
    for (int it = 0;; ++it) {
        GmmEval eval(model);
        Acc init;
        init.w.assign(k, 0.0);
        init.mean.assign(k, VecX(dim, 0.0));
        init.second.assign(k, MatX(dim, dim));
        Acc acc = par::map_reduce(
            n, threads, init,
            [&](Acc& a, std::size_t b, std::size_t e) {
                std::vector<double> terms(k);
                for (std::size_t i = b; i < e; ++i) {
                    const VecX& x = points[i];
                    for (int s = 0; s < k; ++s)
                        terms[s] = eval.log_w[s] + eval.comps[s].logpdf(x);
                    double lse = log_sum_exp(terms);
                    a.loglik += lse;
                    for (int s = 0; s < k; ++s) {
                        double r = std::exp(terms[s] - lse);
                        if (r == 0.0) continue;
                        a.w[s] += r;
                        for (std::size_t p = 0; p < dim; ++p) {
                            a.mean[s][p] += r * x[p];
                            for (std::size_t q2 = p; q2 < dim; ++q2)
                                a.second[s](p, q2) += r * x[p] * x[q2];
                        }
                    }
                }
            },
            [&](Acc& a, const Acc& b) {
                a.loglik += b.loglik;
                for (int s = 0; s < k; ++s) {
                    a.w[s] += b.w[s];
                    for (std::size_t p = 0; p < dim; ++p) {
                        a.mean[s][p] += b.mean[s][p];
                        for (std::size_t q2 = p; q2 < dim; ++q2)
                            a.second[s](p, q2) += b.second[s](p, q2);
                    }
                }
            });

        double loglik = acc.loglik / double(n);
        if (it > 0 && std::abs(loglik - prev) < tol) break;
        if (it >= max_iter) break;
        prev = loglik;

        for (int s = 0; s < k; ++s) {
            if (acc.w[s] < 1e-10) {
                // Dead component: reseed at the worst explained point.
                double worst = std::numeric_limits<double>::max();
                std::size_t worst_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double ll = eval.logpdf(points[i]);
                    if (ll < worst) {
                        worst = ll;
                        worst_i = i;
                    }
                }
                model.means[s] = points[worst_i];
                model.covs[s] = pooled;
                model.weights[s] = 1.0 / double(n);
                continue;
            }
            model.weights[s] = acc.w[s] / double(n);
            for (std::size_t p = 0; p < dim; ++p) model.means[s][p] = acc.mean[s][p] / acc.w[s];
            MatX cov(dim, dim);
            for (std::size_t p = 0; p < dim; ++p)
                for (std::size_t q2 = p; q2 < dim; ++q2) {
                    cov(p, q2) = acc.second[s](p, q2) / acc.w[s] -
                                 model.means[s][p] * model.means[s][q2];
                    cov(q2, p) = cov(p, q2);
                }
            model.covs[s] = cov;
        }
        double wsum = std::accumulate(model.weights.begin(), model.weights.end(), 0.0);
        for (auto& w : model.weights) w /= wsum;
    }
    return model;
}

GmmModel permute_gmm(const GmmModel& model, const Permutation& q) {
    auto src = gausscore::coordinate_sources(q);
    GmmModel out;
    out.weights = model.weights;
    out.means.reserve(model.means.size());
    out.covs.reserve(model.covs.size());
    for (std::size_t s = 0; s < model.means.size(); ++s) {
        out.means.push_back(permute_vec(model.means[s], src));
        out.covs.push_back(permute_mat(model.covs[s], src));
    }
    return out;
}

double gmm_log_density(const GmmModel& model, const VecX& x) { return GmmEval(model).logpdf(x); }

OverlapBound gmm_bayes_error_rate(const std::vector<VecX>& pool,
                                  std::span<const std::uint32_t> train_idx,
                                  std::span<const std::uint32_t> eval_idx, const Permutation& q,
                                  int k_components, double alpha, std::uint64_t seed,
                                  int threads) {
    {
        std::vector<std::uint32_t> a(train_idx.begin(), train_idx.end());
        std::vector<std::uint32_t> b(eval_idx.begin(), eval_idx.end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::uint32_t> overlap;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(overlap));
        if (!overlap.empty())
            throw Error(ErrorKind::contract, "train and eval index sets must be disjoint");
    }
    // Disjoint halves for the two indicator streams, as in qda_error_rate.
    std::vector<std::uint32_t> eval_shuffled(eval_idx.begin(), eval_idx.end());
    Rng rng(derive_seed(seed, 0x6576616cULL));
    rng.shuffle(eval_shuffled);
    std::size_t n_pairs = eval_shuffled.size() / 2;
    if (n_pairs < 100)
        throw Error(ErrorKind::insufficient_data,
                    "overlap bound needs at least 200 evaluation frames");

    std::vector<VecX> train;
    train.reserve(train_idx.size());
    for (auto i : train_idx) train.push_back(pool.at(i));
    GmmModel class1 = fit_gmm(train, k_components, seed, 100, 1e-6, threads);

    GmmEval eval1(class1);
    auto src = gausscore::coordinate_sources(q);

    // log density of the permuted mixture at x equals the class-1 density at
    // the inverse-permuted point (block permutations are orthogonal).
    auto inv_src = gausscore::coordinate_sources(gausscore::inverse(q));
    std::size_t errors = par::map_reduce(
        n_pairs, threads, std::size_t{0},
        [&](std::size_t& acc, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const VecX& z1 = pool[eval_shuffled[i]];
                if (eval1.logpdf(z1) < eval1.logpdf(permute_vec(z1, inv_src))) ++acc;
                VecX z2 = permute_vec(pool[eval_shuffled[n_pairs + i]], src);
                // class-2 density at z2 is the class-1 density at Q^T z2
                if (eval1.logpdf(z2) >= eval1.logpdf(permute_vec(z2, inv_src))) ++acc;
            }
        },
        [](std::size_t& a, std::size_t b) { a += b; });

    return make_bound(double(errors) / (2.0 * double(n_pairs)), n_pairs, alpha);
}

CandidateSet select_permutations(const std::vector<FrameMatrix>& main_frames,
                                 const std::vector<FrameMatrix>& holdout_frames,
                                 const sharedgmm::SharedFit& shared, const SelectConfig& cfg) {
    CandidateSet cands = candidates_from_pi(shared.pi, cfg.p_thresh, cfg.candidate_cap);

    auto main_flat = flatten_frames(main_frames);

    // QDA pass over all main-pipeline frames; pooled moments computed once.
    {
        if (main_flat.empty()) throw Error(ErrorKind::insufficient_data, "no frames to select on");
        const int d = static_cast<int>(main_flat[0].size() / 2);
        auto base = qda_params_from_frames(main_flat, Permutation::identity(d));
        const VecX& mu = base.mu1;
        const MatX& sigma = base.sigma1;
        std::vector<OverlapBound> bounds(cands.perms.size());
        par::parallel_for(cands.perms.size(), cfg.threads, [&](std::size_t s) {
            auto params = qda_params(mu, sigma, cands.perms[s]);
            bounds[s] = qda_error_rate(main_flat, cands.perms[s], params, cfg.alpha, cfg.seed);
        });
        CandidateSet kept;
        for (std::size_t s = 0; s < cands.perms.size(); ++s) {
            cands.provenance[s].qda = bounds[s];
            if (cands.perms[s].is_identity() || bounds[s].bound >= cfg.o_thresh) {
                kept.perms.push_back(cands.perms[s]);
                kept.provenance.push_back(cands.provenance[s]);
            }
        }
        cands = std::move(kept);
    }

    // Second layer: Bayesian mixture classifier trained on held-out frames.
    bool has_non_identity = false;
    for (const auto& q : cands.perms) has_non_identity |= !q.is_identity();
    if (has_non_identity && cfg.gmm_components > 0) {
        std::vector<VecX> pool = main_flat;
        std::vector<std::uint32_t> eval_idx, train_idx;
        if (!holdout_frames.empty()) {
            auto extra = flatten_frames(holdout_frames);
            eval_idx.resize(pool.size());
            std::iota(eval_idx.begin(), eval_idx.end(), 0u);
            std::vector<std::uint32_t> hold(extra.size());
            std::iota(hold.begin(), hold.end(), 0u);
            std::size_t cap = cfg.train_cap_factor * eval_idx.size();
            if (hold.size() > cap) {
                Rng rng(derive_seed(cfg.seed, 0x7261696eULL));
                rng.shuffle(hold);
                hold.resize(cap);
                std::sort(hold.begin(), hold.end());
            }
            std::uint32_t base = static_cast<std::uint32_t>(pool.size());
            for (std::size_t t = 0; t < hold.size(); ++t) {
                pool.push_back(extra[hold[t]]);
                train_idx.push_back(base + static_cast<std::uint32_t>(t));
            }
        } else {
            // No subsample remainder available: carve a disjoint train split
            // out of the main frames.
            std::vector<std::uint32_t> idx(pool.size());
            std::iota(idx.begin(), idx.end(), 0u);
            Rng rng(derive_seed(cfg.seed, 0x73706c6974ULL));
            rng.shuffle(idx);
            std::size_t n_train = std::max<std::size_t>(pool.size() / 5, 1);
            train_idx.assign(idx.begin(), idx.begin() + n_train);
            eval_idx.assign(idx.begin() + n_train, idx.end());
            std::sort(train_idx.begin(), train_idx.end());
            std::sort(eval_idx.begin(), eval_idx.end());
        }

        std::vector<VecX> train;
        train.reserve(train_idx.size());
        for (auto i : train_idx) train.push_back(pool[i]);
        GmmModel class1 =
            fit_gmm(train, cfg.gmm_components, derive_seed(cfg.seed, 0x676d6dULL), 100, 1e-6,
                    cfg.threads);
        GmmEval eval1(class1);

        Rng split_rng(derive_seed(cfg.seed, 0x6576616cULL));
        split_rng.shuffle(eval_idx);
        std::size_t n_pairs = eval_idx.size() / 2;
        if (n_pairs < 100)
            throw Error(ErrorKind::insufficient_data,
                        "overlap bound needs at least 200 evaluation frames");

        std::vector<OverlapBound> bounds(cands.perms.size());
        par::parallel_for(cands.perms.size(), cfg.threads, [&](std::size_t s) {
            const auto& q = cands.perms[s];
            auto src = gausscore::coordinate_sources(q);
            auto inv_src = gausscore::coordinate_sources(gausscore::inverse(q));
            std::size_t errors = 0;
            for (std::size_t i = 0; i < n_pairs; ++i) {
                const VecX& z1 = pool[eval_idx[i]];
                if (eval1.logpdf(z1) < eval1.logpdf(permute_vec(z1, inv_src))) ++errors;
                VecX z2 = permute_vec(pool[eval_idx[n_pairs + i]], src);
                if (eval1.logpdf(z2) >= eval1.logpdf(permute_vec(z2, inv_src))) ++errors;
            }
            bounds[s] = make_bound(double(errors) / (2.0 * double(n_pairs)), n_pairs, cfg.alpha);
        });
        CandidateSet kept;
        for (std::size_t s = 0; s < cands.perms.size(); ++s) {
            cands.provenance[s].gmm = bounds[s];
            if (cands.perms[s].is_identity() || bounds[s].bound >= cfg.o_thresh) {
                kept.perms.push_back(cands.perms[s]);
                kept.provenance.push_back(cands.provenance[s]);
            }
        }
        cands = std::move(kept);
    }
    return cands;
}

}  // namespace formlab::permselect
