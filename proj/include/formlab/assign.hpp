#pragma once

#include <vector>

#include "formlab/gausscore.hpp"
#include "formlab/linalg.hpp"

namespace formlab::assign {

using gausscore::Formation;
using gausscore::Permutation;

// Square matrix of finite assignment costs; c[l][k] is the cost of giving
// role k to player l.
using CostMatrix = std::vector<std::vector<double>>;

// Minimum-cost perfect matching. Among cost ties the lexicographically
// smallest map array wins, so repeated runs are bit-reproducible.
Permutation hungarian(const CostMatrix& c);

double assignment_cost(const CostMatrix& c, const Permutation& q);

struct HardFit {
    Formation formation;
    std::vector<double> objective_trace;  // mean assigned log-density per iteration
    int iterations = 0;
};

// Alternates optimal player-role matching per frame with role moment
// updates from the assigned points.
HardFit fit_hard_assignment(const std::vector<FrameMatrix>& frames, int max_iter = 200,
                            double tol = 1e-7);

}  // namespace formlab::assign
