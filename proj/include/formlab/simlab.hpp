#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "formlab/linalg.hpp"
#include "formlab/permgmm.hpp"

namespace formlab::simlab {

struct GeneratorSpec {
    permgmm::RegimeModel model;
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

// Frames drawn from the model plus the latent regime and permutation that
// produced each one.
struct SimResult {
    std::vector<FrameMatrix> frames;
    std::vector<int> regime;
    std::vector<int> perm_index;  // index into the regime's support
};

SimResult simulate(const GeneratorSpec& spec);

struct TwoRoleRow {
    double delta = 0.0;
    std::string method;  // "perm", "shared" or "hard"
    double mse_mean = 0.0;
    double mse_std = 0.0;
};

// Two overlapping roles at (+delta, 0) and (-delta, 0), swapped with
// probability p; per delta value, the mean-estimation MSE of the permutation
// model, the shared-component GMM and the hard-assignment baseline, with
// optimal label matching before scoring.
std::vector<TwoRoleRow> two_role_experiment(const std::vector<double>& deltas, double p = 0.2,
                                            std::size_t n = 5000, int reps = 100,
                                            std::uint64_t seed = 0, int threads = 1);

}  // namespace formlab::simlab
