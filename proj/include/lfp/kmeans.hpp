#pragma once

#include <Eigen/Dense>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace lfp {

struct KMeansResult {
    std::vector<int> labels;    // one per point
    Eigen::MatrixXd centroids;  // k x dim
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding. `points` is n x dim, one row per point.
inline KMeansResult kmeans_points(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                                  int max_iter = 100) {
    const Eigen::Index n = points.rows();
    if (k < 1 || k > n) throw std::invalid_argument("kmeans: k out of range");
    std::mt19937_64 rng(seed);

    // k-means++ seeding
    Eigen::MatrixXd centroids(k, points.cols());
    std::uniform_int_distribution<Eigen::Index> uni(0, n - 1);
    centroids.row(0) = points.row(uni(rng));
    Eigen::VectorXd d2 =
        (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) { pick = i; break; }
            }
        } else {
            pick = uni(rng);
        }
        centroids.row(c) = points.row(pick);
        d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    KMeansResult res;
    res.labels.assign(n, 0);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                double dist = (points.row(i) - centroids.row(c)).squaredNorm();
                if (dist < best) { best = dist; arg = c; }
            }
            if (res.labels[i] != arg) { res.labels[i] = arg; changed = true; }
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(res.labels[i]) += points.row(i);
            ++counts[res.labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0)
                centroids.row(c) = sums.row(c) / counts[c];
            else
                centroids.row(c) = points.row(uni(rng));  // re-seed empty cluster
        }
        if (!changed && it > 0) break;
    }
    res.centroids = std::move(centroids);
    res.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        res.inertia += (points.row(i) - res.centroids.row(res.labels[i])).squaredNorm();
    return res;
}

}  // namespace lfp
