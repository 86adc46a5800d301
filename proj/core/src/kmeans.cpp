#include "ljpcausal/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "ljpcausal/common.hpp"

namespace ljp {

namespace {

double sq_dist(const Eigen::MatrixXd& points, int i, const Eigen::RowVectorXd& c) {
    return (points.row(i) - c).squaredNorm();
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint32_t seed, int max_iter) {
    const int n = static_cast<int>(points.rows());
    if (k < 1 || k > n) throw ValidationError("kmeans: k must be in [1, n]");

    std::mt19937 rng(seed);
    Eigen::MatrixXd centroids(k, points.cols());

    // k-means++ seeding.
    {
        std::uniform_int_distribution<int> first(0, n - 1);
        centroids.row(0) = points.row(first(rng));
        std::vector<double> d2(n);
        for (int c = 1; c < k; ++c) {
            double total = 0;
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::max();
                for (int j = 0; j < c; ++j) {
                    best = std::min(best, sq_dist(points, i, centroids.row(j)));
                }
                d2[i] = best;
                total += best;
            }
            int pick = 0;
            if (total > 0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double r = u(rng);
                double cum = 0;
                for (int i = 0; i < n; ++i) {
                    cum += d2[i];
                    if (r <= cum) {
                        pick = i;
                        break;
                    }
                }
            } else {
                std::uniform_int_distribution<int> any(0, n - 1);
                pick = any(rng);
            }
            centroids.row(c) = points.row(pick);
        }
    }

    std::vector<int> assignment(n, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) {
                double d = sq_dist(points, i, centroids.row(c));
                if (d < best_d) {
                    best_d = d;
                    best_c = c;
                }
            }
            if (assignment[i] != best_c) {
                assignment[i] = best_c;
                changed = true;
            }
        }

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums.row(assignment[i]) += points.row(i);
            counts[assignment[i]] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centroids.row(c) = sums.row(c) / counts[c];
            } else {
                // Refill with the point farthest from its own centroid.
                int far_i = 0;
                double far_d = -1;
                for (int i = 0; i < n; ++i) {
                    double d = sq_dist(points, i, centroids.row(assignment[i]));
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                centroids.row(c) = points.row(far_i);
                assignment[far_i] = c;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
    }

    KMeansResult result;
    result.assignment = std::move(assignment);
    result.centroids = std::move(centroids);
    for (int i = 0; i < n; ++i) {
        result.inertia += sq_dist(points, i, result.centroids.row(result.assignment[i]));
    }
    return result;
}

double mean_silhouette(const Eigen::MatrixXd& points, const std::vector<int>& assignment) {
    const int n = static_cast<int>(points.rows());
    if (n == 0) return 0;
    const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<int> counts(k, 0);
    for (int a : assignment) counts[a] += 1;

    double total = 0;
    for (int i = 0; i < n; ++i) {
        if (counts[assignment[i]] <= 1) continue;  // singleton: s = 0
        std::vector<double> mean_d(k, 0);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_d[assignment[j]] += (points.row(i) - points.row(j)).norm();
        }
        double a = mean_d[assignment[i]] / (counts[assignment[i]] - 1);
        double b = std::numeric_limits<double>::max();
        for (int c = 0; c < k; ++c) {
            if (c == assignment[i] || counts[c] == 0) continue;
            b = std::min(b, mean_d[c] / counts[c]);
        }
        if (b == std::numeric_limits<double>::max()) continue;
        total += (b - a) / std::max(a, b);
    }
    return total / n;
}

}  // namespace ljp
