#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "formlab/gausscore.hpp"
#include "formlab/linalg.hpp"

namespace formlab::formmetrics {

using gausscore::Formation;
using gausscore::RoleGaussian;

// Closed-form Bhattacharyya coefficient between two 2D Gaussians, in (0, 1].
double bhattacharyya_gaussian(const RoleGaussian& g1, const RoleGaussian& g2);

// Mean Bhattacharyya coefficient over all unordered role pairs.
double formation_overlap_index(const Formation& f);

// 2-Wasserstein distance between Gaussians (closed form).
double w2_gaussian(const RoleGaussian& g1, const RoleGaussian& g2);

// Optimal role matching under squared W2 costs; valid as the mixture
// Wasserstein distance because both formations weight roles uniformly.
double mixture_wasserstein(const Formation& f1, const Formation& f2);

// Sorted projections of the role means along m evenly spaced directions in
// [0, pi). Column j holds the sorted projections for direction j.
struct EmbeddingVector {
    std::vector<double> v;  // column-major, d * m entries
    int d = 0;
    int m = 0;
};

EmbeddingVector sliced_embedding(const Formation& f, int m = 12);

// ||e1 - e2|| / sqrt(d * m); approximates the sliced Wasserstein distance
// between the two sets of role means.
double embedding_distance(const EmbeddingVector& e1, const EmbeddingVector& e2);

struct ClusterResult {
    std::vector<int> labels;
    std::vector<std::vector<double>> centroids;
    std::vector<int> representatives;  // per cluster: member index closest to centroid
    double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding; best inertia over restarts.
ClusterResult kmeans(const std::vector<EmbeddingVector>& embeddings, int k = 5, int restarts = 10,
                     std::uint64_t seed = 0);

struct SubstitutionDistance {
    std::size_t from_segment = 0;
    std::size_t to_segment = 0;
    double distance = 0.0;
    bool first = false;
    bool last = false;
};

// Mixture-Wasserstein distance across each consecutive segment pair.
std::vector<SubstitutionDistance> substitution_distance_report(
    const std::vector<Formation>& segment_formations);

}  // namespace formlab::formmetrics
