#pragma once

#include <cstdint>
#include <vector>

#include "formlab/gausscore.hpp"
#include "formlab/linalg.hpp"

namespace formlab::sharedgmm {

// One-player-per-frame dataset: component l of constructed frame z[j] is the
// location of player l in original frame source_index[j][l]. Frame indices
// are used at most once and every player is drawn exactly floor(n/d) times.
struct IndependentDataset {
    std::vector<FrameMatrix> z;
    std::vector<std::vector<std::uint32_t>> source_index;
};

IndependentDataset build_independent_dataset(const std::vector<FrameMatrix>& frames,
                                             std::uint64_t seed);

struct SharedFit {
    gausscore::Formation formation;
    std::vector<std::vector<double>> pi;  // pi[l][k]: P(role k assigned to player l)
    std::vector<double> loglik_trace;     // mean log-likelihood per constructed frame
    std::size_t n_constructed = 0;
    int reseed_events = 0;  // empty-component fallbacks taken during EM
};

// Component k starts at the empirical moments of player k; pi rows start at
// 0.5 on the diagonal with the remainder spread evenly.
SharedFit init_shared(const std::vector<FrameMatrix>& frames);

// EM for d per-player mixtures sharing one set of Gaussian components.
SharedFit fit_shared_gmm(const IndependentDataset& ds, const SharedFit& init, int max_iter = 200,
                         double tol = 1e-7);

}  // namespace formlab::sharedgmm
