#include "formlab/formmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "formlab/assign.hpp"
#include "formlab/rng.hpp"

namespace formlab::formmetrics {

double bhattacharyya_gaussian(const RoleGaussian& g1, const RoleGaussian& g2) {
    Mat2 bar = (g1.sigma + g2.sigma) * 0.5;
    double det_bar = bar.det();
    double det1 = g1.sigma.det();
    double det2 = g2.sigma.det();
    if (det_bar <= 0.0 || det1 <= 0.0 || det2 <= 0.0) {
        bar = gausscore::regularize_covariance(bar);
        det_bar = bar.det();
        if (det_bar <= 0.0 || det1 <= 0.0 || det2 <= 0.0)
            throw Error(ErrorKind::numeric, "degenerate covariance in Bhattacharyya coefficient");
    }
    Vec2 diff = g1.mu - g2.mu;
    Vec2 solved = bar.inverse() * diff;
    double db = 0.125 * diff.dot(solved) + 0.5 * std::log(det_bar / std::sqrt(det1 * det2));
    return std::exp(-db);
}

double formation_overlap_index(const Formation& f) {
    const int d = f.d();
    if (d < 2) throw Error(ErrorKind::contract, "overlap index needs at least two roles");
    double acc = 0.0;
    int pairs = 0;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            acc += bhattacharyya_gaussian(f.roles[i], f.roles[j]);
            ++pairs;
        }
    return acc / double(pairs);
}

double w2_gaussian(const RoleGaussian& g1, const RoleGaussian& g2) {
    // identical parameters are exactly distance zero; the closed form would
    // otherwise return sqrt of rounding noise
    if (g1.mu.x == g2.mu.x && g1.mu.y == g2.mu.y && g1.sigma.a == g2.sigma.a &&
        g1.sigma.b == g2.sigma.b && g1.sigma.c == g2.sigma.c && g1.sigma.d == g2.sigma.d)
        return 0.0;
    Mat2 root2 = sqrt_spd(g2.sigma);
    Mat2 inner = sqrt_spd(root2 * g1.sigma * root2);
    double tr = g1.sigma.trace() + g2.sigma.trace() - 2.0 * inner.trace();
    double w2sq = (g1.mu - g2.mu).norm2() + std::max(tr, 0.0);
    return std::sqrt(w2sq);
}

double mixture_wasserstein(const Formation& f1, const Formation& f2) {
    const int d = f1.d();
    if (d != f2.d()) throw Error(ErrorKind::contract, "formations must have equal role counts");
    assign::CostMatrix cost(d, std::vector<double>(d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double w = w2_gaussian(f1.roles[i], f2.roles[j]);
            cost[i][j] = w * w;
        }
    auto q = assign::hungarian(cost);
    return std::sqrt(assign::assignment_cost(cost, q));
}

EmbeddingVector sliced_embedding(const Formation& f, int m) {
    if (m < 1) throw Error(ErrorKind::config, "need at least one projection direction");
    const int d = f.d();
    EmbeddingVector e;
    e.d = d;
    e.m = m;
    e.v.resize(std::size_t(d) * m);
    std::vector<double> col(d);
    for (int j = 0; j < m; ++j) {
        double theta = double(j) * M_PI / double(m);
        Vec2 u{std::cos(theta), std::sin(theta)};
        for (int i = 0; i < d; ++i) col[i] = f.roles[i].mu.dot(u);
        std::sort(col.begin(), col.end());
        for (int i = 0; i < d; ++i) e.v[std::size_t(j) * d + i] = col[i];
    }
    return e;
}

double embedding_distance(const EmbeddingVector& e1, const EmbeddingVector& e2) {
    if (e1.d != e2.d || e1.m != e2.m)
        throw Error(ErrorKind::contract, "embedding shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < e1.v.size(); ++i) {
        double diff = e1.v[i] - e2.v[i];
        s += diff * diff;
    }
    return std::sqrt(s / double(e1.v.size()));
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

struct LloydRun {
    std::vector<int> labels;
    std::vector<std::vector<double>> centroids;
    double inertia = std::numeric_limits<double>::max();
};

LloydRun lloyd_once(const std::vector<std::vector<double>>& pts, int k, Rng& rng) {
    const std::size_t n = pts.size();
    const std::size_t dim = pts[0].size();

    // k-means++ seeding
    std::vector<std::vector<double>> centroids;
    centroids.push_back(pts[rng.next_below(n)]);
    std::vector<double> d2(n, std::numeric_limits<double>::max());
    while (centroids.size() < std::size_t(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(pts[i], centroids.back()));
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
        centroids.push_back(pts[pick]);
    }

    LloydRun run;
    run.labels.assign(n, -1);
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        run.inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(pts[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                double dd = sq_dist(pts[i], centroids[c]);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            run.inertia += best_d;
            if (run.labels[i] != best) {
                run.labels[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[run.labels[i]];
            for (std::size_t p = 0; p < dim; ++p) sums[run.labels[i]][p] += pts[i][p];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Empty cluster: grab the point farthest from its centroid.
                double far = -1.0;
                std::size_t far_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double dd = sq_dist(pts[i], centroids[run.labels[i]]);
                    if (dd > far) {
                        far = dd;
                        far_i = i;
                    }
                }
                centroids[c] = pts[far_i];
                continue;
            }
            for (std::size_t p = 0; p < dim; ++p) centroids[c][p] = sums[c][p] / double(counts[c]);
        }
    }
    run.centroids = std::move(centroids);
    return run;
}

}  // namespace

ClusterResult kmeans(const std::vector<EmbeddingVector>& embeddings, int k, int restarts,
                     std::uint64_t seed) {
    if (embeddings.size() < std::size_t(k))
        throw Error(ErrorKind::insufficient_data, "fewer embeddings than clusters");
    if (k < 1) throw Error(ErrorKind::config, "k must be >= 1");
    std::vector<std::vector<double>> pts;
    pts.reserve(embeddings.size());
    for (const auto& e : embeddings) pts.push_back(e.v);

    LloydRun best;
    for (int r = 0; r < std::max(restarts, 1); ++r) {
        Rng rng(derive_seed(seed, std::uint64_t(r)));
        LloydRun run = lloyd_once(pts, k, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }

    ClusterResult res;
    res.labels = best.labels;
    res.centroids = best.centroids;
    res.inertia = best.inertia;
    res.representatives.assign(k, -1);
    std::vector<double> best_d(k, std::numeric_limits<double>::max());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        int c = res.labels[i];
        double dd = sq_dist(pts[i], res.centroids[c]);
        if (dd < best_d[c]) {
            best_d[c] = dd;
            res.representatives[c] = static_cast<int>(i);
        }
    }
    return res;
}

std::vector<SubstitutionDistance> substitution_distance_report(
    const std::vector<Formation>& segment_formations) {
    if (segment_formations.size() < 2)
        throw Error(ErrorKind::insufficient_data, "need at least two segments");
    std::vector<SubstitutionDistance> rows;
    for (std::size_t i = 0; i + 1 < segment_formations.size(); ++i) {
        SubstitutionDistance row;
        row.from_segment = i;
        row.to_segment = i + 1;
        row.distance = mixture_wasserstein(segment_formations[i], segment_formations[i + 1]);
        row.first = (i == 0);
        row.last = (i + 2 == segment_formations.size());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace formlab::formmetrics
