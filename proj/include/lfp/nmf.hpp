#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfp/kmeans.hpp"

namespace lfp {

/// Convex NMF: X ~ X H W^T with H, W >= 0, so factors Z = XH are convex-like
/// combinations of the data columns and W acts as a soft cluster indicator.
struct ConvexNmfModel {
    Eigen::MatrixXd W;  // d x p loadings
    Eigen::MatrixXd H;  // d x p mixing, Z = XH
    int p = 0;
    double final_objective = 0.0;
    std::vector<double> objective_history;
};

namespace detail {

inline void split_signs(const Eigen::MatrixXd& a, Eigen::MatrixXd& pos, Eigen::MatrixXd& neg) {
    pos = (a.array().abs() + a.array()) / 2.0;
    neg = (a.array().abs() - a.array()) / 2.0;
}

}  // namespace detail

namespace detail {

inline ConvexNmfModel fit_convex_nmf_once(const Eigen::MatrixXd& x, int p, int max_iter,
                                          double tol, std::uint64_t seed) {
    const Eigen::Index d = x.cols();
    if (p < 1 || p > d) throw std::invalid_argument("fit_convex_nmf: p out of range");
    if (x.rows() < 2) throw std::invalid_argument("fit_convex_nmf: need at least 2 rows");
    if (!x.allFinite()) throw std::invalid_argument("fit_convex_nmf: non-finite input");
    const double eps = 1e-10;

    // Warm start from k-means on the asset series (columns as points).
    auto km = kmeans_points(x.transpose(), p, seed);
    Eigen::MatrixXd g0 = Eigen::MatrixXd::Zero(d, p);
    Eigen::VectorXd sizes = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < d; ++i) {
        g0(i, km.labels[i]) = 1.0;
        sizes[km.labels[i]] += 1.0;
    }
    Eigen::MatrixXd w = g0.array() + 0.2;
    Eigen::MatrixXd h = (g0.array() + 0.2).matrix() *
                        (sizes.array() + 0.2 * double(d)).inverse().matrix().asDiagonal();

    const Eigen::MatrixXd y = x.transpose() * x;  // d x d Gram
    Eigen::MatrixXd yp, yn;
    detail::split_signs(y, yp, yn);
    const double trace_y = y.trace();

    auto objective = [&](const Eigen::MatrixXd& hh, const Eigen::MatrixXd& ww) {
        Eigen::MatrixXd yh = y * hh;
        return trace_y - 2.0 * (ww.transpose() * yh).trace() +
               (ww.transpose() * ww * hh.transpose() * yh).trace();
    };

    ConvexNmfModel model;
    model.p = p;
    double prev = objective(h, w);
    model.objective_history.push_back(prev);
    for (int it = 0; it < max_iter; ++it) {
        {
            Eigen::MatrixXd yph = yp * h, ynh = yn * h;
            Eigen::MatrixXd hyh_p = w * (h.transpose() * yph);
            Eigen::MatrixXd hyh_n = w * (h.transpose() * ynh);
            w = w.array() * ((yph + hyh_n).array() / ((ynh + hyh_p).array() + eps)).sqrt();
        }
        {
            Eigen::MatrixXd wtw = w.transpose() * w;
            Eigen::MatrixXd num = yp * w + yn * h * wtw;
            Eigen::MatrixXd den = yn * w + yp * h * wtw;
            h = h.array() * (num.array() / (den.array() + eps)).sqrt();
        }
        double obj = objective(h, w);
        model.objective_history.push_back(obj);
        if (prev - obj >= 0.0 && prev > 0.0 && (prev - obj) / prev < tol) {
            prev = obj;
            break;
        }
        prev = obj;
    }
    model.W = std::move(w);
    model.H = std::move(h);
    model.final_objective = prev;
    if (!std::isfinite(model.final_objective))
        throw std::runtime_error("fit_convex_nmf: objective diverged");
    return model;
}

}  // namespace detail

/// Multiplicative-update fit. The Frobenius objective ||X - XHW^T||^2 is
/// non-increasing across iterations; stops on relative decrease < tol.
/// Runs a few k-means warm starts (derived deterministically from `seed`)
/// and keeps the lowest final objective, which stabilizes the recovered
/// clustering across bootstrap resamples.
inline ConvexNmfModel fit_convex_nmf(const Eigen::MatrixXd& x, int p, int max_iter = 500,
                                     double tol = 1e-6, std::uint64_t seed = 0,
                                     int restarts = 3) {
    if (restarts < 1) throw std::invalid_argument("fit_convex_nmf: restarts must be >= 1");
    ConvexNmfModel best;
    for (int r = 0; r < restarts; ++r) {
        std::uint64_t s = seed + 0x9e3779b97f4a7c15ull * std::uint64_t(r);
        ConvexNmfModel m = detail::fit_convex_nmf_once(x, p, max_iter, tol, s);
        if (r == 0 || m.final_objective < best.final_objective) best = std::move(m);
    }
    return best;
}

/// (XH)W^T
inline Eigen::MatrixXd reconstruct(const ConvexNmfModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.W.rows()) throw std::invalid_argument("reconstruct: shape mismatch");
    return x * model.H * model.W.transpose();
}

/// Rescale each column of W to unit norm, with H scaled inversely so the
/// product XHW^T is unchanged.
inline ConvexNmfModel unit_normalize_loadings(const ConvexNmfModel& model) {
    ConvexNmfModel out = model;
    for (int k = 0; k < model.p; ++k) {
        double norm = out.W.col(k).norm();
        if (norm <= 0.0)
            throw std::invalid_argument("unit_normalize_loadings: zero column " +
                                        std::to_string(k));
        out.W.col(k) /= norm;
        out.H.col(k) *= norm;
    }
    return out;
}

inline double rmse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat) {
    return std::sqrt((x - xhat).squaredNorm() / double(x.size()));
}

/// Text dump: "d p" header, then W rows, then H rows.
inline void save_nmf(const ConvexNmfModel& model, std::ostream& os) {
    os.precision(17);
    os << model.W.rows() << " " << model.p << "\n";
    for (Eigen::Index i = 0; i < model.W.rows(); ++i) {
        for (int k = 0; k < model.p; ++k) os << (k ? " " : "") << model.W(i, k);
        os << "\n";
    }
    for (Eigen::Index i = 0; i < model.H.rows(); ++i) {
        for (int k = 0; k < model.p; ++k) os << (k ? " " : "") << model.H(i, k);
        os << "\n";
    }
}

inline ConvexNmfModel load_nmf(std::istream& is) {
    ConvexNmfModel m;
    Eigen::Index d;
    if (!(is >> d >> m.p)) throw std::runtime_error("load_nmf: bad header");
    m.W.resize(d, m.p);
    m.H.resize(d, m.p);
    for (Eigen::Index i = 0; i < d; ++i)
        for (int k = 0; k < m.p; ++k)
            if (!(is >> m.W(i, k))) throw std::runtime_error("load_nmf: truncated W");
    for (Eigen::Index i = 0; i < d; ++i)
        for (int k = 0; k < m.p; ++k)
            if (!(is >> m.H(i, k))) throw std::runtime_error("load_nmf: truncated H");
    return m;
}

}  // namespace lfp
