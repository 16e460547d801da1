#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "formlab/gausscore.hpp"
#include "formlab/linalg.hpp"
#include "formlab/sharedgmm.hpp"
#include "formlab/trackio.hpp"

namespace formlab::permgmm {

using gausscore::Formation;
using gausscore::Permutation;

// Probability distribution over a retained permutation support.
struct PermDistribution {
    std::vector<Permutation> support;
    std::vector<double> weights;
    int identity_index = -1;  // -1 when identity is not in support
};

struct Regime {
    Formation formation;
    PermDistribution perm_dist;
    double v = 1.0;  // regime probability
};

struct RegimeModel {
    std::vector<Regime> regimes;
    std::vector<double> loglik_trace;  // mean log-likelihood per frame
    std::size_t n_frames_fit = 0;

    int d() const { return regimes.empty() ? 0 : regimes[0].formation.d(); }
    int n_regimes() const { return static_cast<int>(regimes.size()); }
};

struct FramePosterior {
    std::vector<double> v_ir;                // posterior regime probabilities
    std::vector<std::vector<double>> w_irQ;  // per regime, over the support
    double log_like = 0.0;
    bool underflow = false;
};

struct EStepResult {
    std::vector<FramePosterior> posteriors;
    double mean_loglik = 0.0;        // over frames with finite likelihood
    std::size_t underflow_count = 0;
};

struct FitOptions {
    int max_iter = 200;
    double tol = 1e-7;
    double prune_threshold = 1e-10;
    double sigma_floor = gausscore::kSigmaFloor;
    int threads = 1;
};

// Posteriors via Bayes in log-space with log-sum-exp.
EStepResult e_step(const std::vector<FrameMatrix>& frames, const RegimeModel& model,
                   int threads = 1);

// Closed-form parameter updates; prunes permutation weights below the
// threshold and renormalizes. A support entry leaves the (shared) support
// only when pruned in every regime; identity is always retained.
RegimeModel m_step(const std::vector<FrameMatrix>& frames,
                   const std::vector<FramePosterior>& posteriors, const RegimeModel& model,
                   const FitOptions& opts = {});

RegimeModel fit(const std::vector<FrameMatrix>& frames, RegimeModel init,
                const FitOptions& opts = {});

// Formation from the shared fit; weights proportional to the smallest pi
// entry each permutation touches. Falls back to uniform weights (and sets
// *uniform_fallback) when every minimum is zero.
RegimeModel init_one_regime(const sharedgmm::SharedFit& shared,
                            const std::vector<Permutation>& support,
                            bool* uniform_fallback = nullptr);

enum class MultiInit { from_possession, chronological_split, identity_half };

struct MultiInitOptions {
    MultiInit mode = MultiInit::chronological_split;
    FitOptions subset_fit;  // used by from_possession per-subset fits
};

RegimeModel init_multi_regime(const std::vector<FrameMatrix>& frames,
                              const std::vector<trackio::Possession>& possession,
                              const std::vector<Permutation>& support, int n_regimes,
                              const MultiInitOptions& opts);

// Expected assignment matrix of regime r: sum over support of w * Q.
std::vector<std::vector<double>> avg_permutation(const RegimeModel& model, int r);

std::vector<double> frame_regime_prob(const RegimeModel& model, const FrameMatrix& y);
std::vector<double> frame_perm_prob(const RegimeModel& model, const FrameMatrix& y, int r);

// Mean over frames of the posterior identity-permutation probability.
double no_swap_probability(const RegimeModel& model, const std::vector<FrameMatrix>& frames);

// Frame-count weighted aggregate across segments.
double weighted_no_swap(const std::vector<double>& values, const std::vector<std::size_t>& counts);

// Role relabeling that leaves the distribution of Y unchanged: role k moves
// to slot rho(k) and each support permutation q becomes rho o q.
RegimeModel relabel_roles(const RegimeModel& model, const Permutation& rho);

}  // namespace formlab::permgmm
