#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "lfp/panel.hpp"

namespace lfp::test {

/// Consecutive weekdays starting at `start`.
inline std::vector<Date> make_dates(Eigen::Index n, Date start = Date(2015, 1, 5)) {
    std::vector<Date> out;
    Date d = start;
    while (Eigen::Index(out.size()) < n) {
        int dow = ((d.serial % 7) + 7) % 7;  // 1970-01-01 was a Thursday (=3)
        int weekday = (dow + 4) % 7;         // 0 = Sunday
        if (weekday != 0 && weekday != 6) out.push_back(d);
        d = Date(d.serial + 1);
    }
    return out;
}

inline ReturnsPanel panel_from_matrix(const Eigen::MatrixXd& x, Date start = Date(2015, 1, 5),
                                      const std::vector<std::string>& classes = {}) {
    std::vector<Asset> assets;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        std::string cls = classes.empty() ? "all" : classes[size_t(i) % classes.size()];
        assets.push_back({"A" + std::to_string(i), cls});
    }
    return ReturnsPanel(make_dates(x.rows(), start), assets, x);
}

struct PlantedPanel {
    Eigen::MatrixXd x;        // T x d returns
    std::vector<int> labels;  // true cluster of each asset
};

/// Block factor structure: k latent factors, each asset loads on exactly one,
/// plus idiosyncratic noise. Scaled to daily-return magnitudes.
inline PlantedPanel make_planted(Eigen::Index t, Eigen::Index d, int k, std::uint64_t seed,
                                 double factor_vol = 0.01, double noise_vol = 0.002) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd f(t, k);
    for (Eigen::Index r = 0; r < t; ++r)
        for (int j = 0; j < k; ++j) f(r, j) = factor_vol * gauss(rng);
    PlantedPanel out;
    out.x.resize(t, d);
    out.labels.resize(size_t(d));
    std::uniform_real_distribution<double> load(0.8, 1.2);
    for (Eigen::Index i = 0; i < d; ++i) {
        int cl = int(i % k);
        out.labels[size_t(i)] = cl;
        double li = load(rng);
        for (Eigen::Index r = 0; r < t; ++r)
            out.x(r, i) = li * f(r, cl) + noise_vol * gauss(rng);
    }
    return out;
}

/// Random symmetric positive-definite matrix with unit-scale variances.
inline Eigen::MatrixXd random_spd(Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) a(i, j) = gauss(rng);
    return a * a.transpose() / double(d) + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace lfp::test
