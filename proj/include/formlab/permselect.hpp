#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "formlab/gausscore.hpp"
#include "formlab/linalg.hpp"
#include "formlab/sharedgmm.hpp"

namespace formlab::permselect {

using gausscore::Permutation;

// (1-p)-quantile feeds the CLT adjustment of the overlap bound. Rational
// approximation plus one Halley step; absolute error well under 1e-8.
double normal_quantile(double p);

// Empirical classifier error and its CLT-adjusted overlap upper bound
// 2*error_rate + z_{1-alpha} / sqrt(2 n), with n the number of independent
// evaluation pairs.
struct OverlapBound {
    double error_rate = 0.0;
    std::size_t n_eval = 0;  // pair count
    double alpha = 0.05;
    double bound = 0.0;
};

OverlapBound make_bound(double error_rate, std::size_t n_eval, double alpha);

struct PermProvenance {
    double min_pi_entry = 0.0;
    std::optional<OverlapBound> qda;
    std::optional<OverlapBound> gmm;
};

struct CandidateSet {
    std::vector<Permutation> perms;
    std::vector<PermProvenance> provenance;
};

// All permutations whose every selected pi entry clears p_thresh, found by
// row-wise depth-first search; identity is force-included. Throws when more
// than cap candidates exist.
CandidateSet candidates_from_pi(const std::vector<std::vector<double>>& pi, double p_thresh,
                                std::size_t cap = 10000);

// Flattened representation: frame row l occupies coordinates (2l, 2l+1).
VecX flatten_frame(const FrameMatrix& y);
std::vector<VecX> flatten_frames(const std::vector<FrameMatrix>& frames);

struct QdaParams {
    VecX mu1;
    MatX sigma1;
    VecX mu2;   // coordinate-permuted mu1
    MatX sigma2;  // coordinate-permuted sigma1
};

// Class-2 parameters are derived from the pooled class-1 moments by index
// permutation; no per-permutation refit happens.
QdaParams qda_params(const VecX& mu, const MatX& sigma, const Permutation& q);
QdaParams qda_params_from_frames(const std::vector<VecX>& frames_flat, const Permutation& q);

// Error rate of the plug-in QDA classifier between observed and q-permuted
// frames. split_seed drives the split into two disjoint halves, one per
// indicator stream; the CLT variance bound behind the adjustment needs the
// streams independent. max_eval > 0 caps the frames used before splitting.
OverlapBound qda_error_rate(const std::vector<VecX>& frames_flat, const Permutation& q,
                            const QdaParams& params, double alpha = 0.05,
                            std::uint64_t split_seed = 0, std::size_t max_eval = 0);

// Full-covariance Gaussian mixture used as the second-layer classifier.
struct GmmModel {
    std::vector<double> weights;
    std::vector<VecX> means;
    std::vector<MatX> covs;
};

GmmModel fit_gmm(const std::vector<VecX>& points, int k, std::uint64_t seed, int max_iter = 100,
                 double tol = 1e-6, int threads = 1);

// Mixture of QY: coordinate-permuted means and covariances, same weights.
GmmModel permute_gmm(const GmmModel& model, const Permutation& q);

double gmm_log_density(const GmmModel& model, const VecX& x);

// Bayesian mixture classifier bound. Train and eval index sets address the
// shared pool and must be disjoint.
OverlapBound gmm_bayes_error_rate(const std::vector<VecX>& pool,
                                  std::span<const std::uint32_t> train_idx,
                                  std::span<const std::uint32_t> eval_idx, const Permutation& q,
                                  int k_components, double alpha, std::uint64_t seed,
                                  int threads = 1);

struct SelectConfig {
    double p_thresh = 0.025;
    double o_thresh = 0.05;
    double alpha = 0.05;
    int gmm_components = 8;
    std::uint64_t seed = 0;
    std::size_t candidate_cap = 10000;
    std::size_t train_cap_factor = 4;  // holdout train set capped at factor * n_eval
    int threads = 1;
};

// pi-threshold enumeration, then the QDA pass, then the Gaussian-mixture
// pass on survivors. Identity is never discarded. The holdout frames (those
// removed during subsampling) train the mixture classifier; when none are
// available a seeded disjoint split of the main frames is used instead.
CandidateSet select_permutations(const std::vector<FrameMatrix>& main_frames,
                                 const std::vector<FrameMatrix>& holdout_frames,
                                 const sharedgmm::SharedFit& shared, const SelectConfig& cfg);

}  // namespace formlab::permselect
