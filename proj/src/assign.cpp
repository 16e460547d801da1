#include "formlab/assign.hpp"

#include <cmath>
#include <limits>

namespace formlab::assign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment. Returns one optimal matching plus the
// optimal dual potentials (u over rows, v over columns).
void solve_potentials(const CostMatrix& c, std::vector<int>& row_to_col, std::vector<double>& u,
                      std::vector<double>& v) {
    int n = static_cast<int>(c.size());
    u.assign(n + 1, 0.0);
    v.assign(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = c[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    row_to_col.assign(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j]) row_to_col[p[j] - 1] = j - 1;
}

// Kuhn augmenting search on the tight-edge graph.
bool try_augment(int row, const std::vector<std::vector<int>>& adj, std::vector<char>& visited,
                 std::vector<int>& col_owner) {
    for (int col : adj[row]) {
        if (visited[col]) continue;
        visited[col] = 1;
        if (col_owner[col] < 0 || try_augment(col_owner[col], adj, visited, col_owner)) {
            col_owner[col] = row;
            return true;
        }
    }
    return false;
}

bool has_perfect_matching(const std::vector<std::vector<int>>& adj, int n,
                          const std::vector<char>& col_taken, int first_row) {
    std::vector<int> col_owner(n, -1);
    for (int row = first_row; row < n; ++row) {
        std::vector<char> visited(col_taken.begin(), col_taken.end());
        if (!try_augment(row, adj, visited, col_owner)) return false;
    }
    return true;
}

}  // namespace

Permutation hungarian(const CostMatrix& c) {
    int n = static_cast<int>(c.size());
    if (n == 0) throw Error(ErrorKind::contract, "empty cost matrix");
    double scale = 1.0;
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(c[i].size()) != n)
            throw Error(ErrorKind::contract, "cost matrix must be square");
        for (double x : c[i]) {
            if (!std::isfinite(x)) throw Error(ErrorKind::contract, "cost entries must be finite");
            scale = std::max(scale, std::abs(x));
        }
    }

    std::vector<int> row_to_col;
    std::vector<double> u, v;
    solve_potentials(c, row_to_col, u, v);

    // Every optimal matching lives on zero-reduced-cost edges of the optimal
    // duals (complementary slackness), so ties are resolved by picking the
    // lexicographically smallest perfect matching inside that graph.
    double tol = 1e-9 * scale;
    std::vector<std::vector<int>> adj(n);
    bool forced = true;
    for (int l = 0; l < n; ++l) {
        for (int k = 0; k < n; ++k)
            if (c[l][k] - u[l + 1] - v[k + 1] <= tol) adj[l].push_back(k);
        if (adj[l].size() != 1) forced = false;
    }

    Permutation q;
    q.map.assign(n, -1);
    if (forced) {
        for (int l = 0; l < n; ++l) q.map[l] = adj[l][0];
        return q;
    }

    std::vector<char> col_taken(n, 0);
    for (int l = 0; l < n; ++l) {
        bool placed = false;
        for (int k : adj[l]) {
            if (col_taken[k]) continue;
            col_taken[k] = 1;
            if (has_perfect_matching(adj, n, col_taken, l + 1)) {
                q.map[l] = k;
                placed = true;
                break;
            }
            col_taken[k] = 0;
        }
        if (!placed) throw Error(ErrorKind::internal, "tight graph lost feasibility");
    }
    return q;
}

double assignment_cost(const CostMatrix& c, const Permutation& q) {
    double s = 0.0;
    for (std::size_t l = 0; l < c.size(); ++l) s += c[l][q.map[l]];
    return s;
}

HardFit fit_hard_assignment(const std::vector<FrameMatrix>& frames, int max_iter, double tol) {
    if (frames.empty()) throw Error(ErrorKind::insufficient_data, "no frames to fit");
    const int d = static_cast<int>(frames[0].size());
    const double n = static_cast<double>(frames.size());

    // Start at per-player empirical moments.
    HardFit fit;
    fit.formation.roles.resize(d);
    {
        std::vector<Vec2> mean(d);
        for (const auto& y : frames)
            for (int k = 0; k < d; ++k) mean[k] += y[k];
        for (auto& m : mean) m = m * (1.0 / n);
        std::vector<Mat2> cov(d);
        for (const auto& y : frames)
            for (int k = 0; k < d; ++k) cov[k] = cov[k] + outer(y[k] - mean[k], y[k] - mean[k]);
        for (int k = 0; k < d; ++k)
            fit.formation.roles[k] = gausscore::make_role(mean[k], cov[k] * (1.0 / n));
    }

    CostMatrix cost(d, std::vector<double>(d));
    double prev = -kInf;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<gausscore::GaussianEval> eval;
        eval.reserve(d);
        for (const auto& role : fit.formation.roles) eval.push_back(gausscore::precompute(role));

        std::vector<Vec2> sum(d);
        std::vector<Mat2> sq(d);  // sum of outer products, centered later
        double objective = 0.0;
        for (const auto& y : frames) {
            for (int l = 0; l < d; ++l)
                for (int k = 0; k < d; ++k) cost[l][k] = -eval[k].logpdf(y[l]);
            Permutation q = hungarian(cost);
            objective -= assignment_cost(cost, q);
            for (int l = 0; l < d; ++l) {
                sum[q.map[l]] += y[l];
                sq[q.map[l]] = sq[q.map[l]] + outer(y[l], y[l]);
            }
        }
        objective /= n;
        fit.objective_trace.push_back(objective);
        fit.iterations = it + 1;
        if (it > 0 && std::abs(objective - prev) < tol) break;
        prev = objective;

        // Perfect matching guarantees every role received exactly n points.
        for (int k = 0; k < d; ++k) {
            Vec2 mu = sum[k] * (1.0 / n);
            Mat2 cov = sq[k] * (1.0 / n) - outer(mu, mu);
            fit.formation.roles[k] = gausscore::make_role(mu, cov);
        }
    }
    return fit;
}

}  // namespace formlab::assign
