#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ljp {

struct KMeansResult {
    std::vector<int> assignment;   // per point
    Eigen::MatrixXd centroids;     // k x dim
    double inertia = 0;
};

// Lloyd iterations with k-means++ seeding, deterministic per seed.
// Empty clusters are refilled with the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint32_t seed,
                    int max_iter = 100);

// Mean silhouette over all points (euclidean); singleton clusters score 0.
double mean_silhouette(const Eigen::MatrixXd& points, const std::vector<int>& assignment);

}  // namespace ljp
