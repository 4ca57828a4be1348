#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace lfp {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int evaluations = 0;
};

/// Downhill simplex (Nelder-Mead) minimization.
inline OptimResult nelder_mead(const Objective& f, Eigen::VectorXd x0, double step = 0.1,
                               int max_eval = 20000, double tol = 1e-10) {
    const int n = int(x0.size());
    OptimResult res;
    std::vector<Eigen::VectorXd> pts(n + 1, x0);
    std::vector<double> vals(n + 1);
    for (int i = 0; i < n; ++i) pts[i + 1][i] += (x0[i] != 0.0 ? step * std::abs(x0[i]) : step);
    for (int i = 0; i <= n; ++i) vals[i] = f(pts[i]);
    res.evaluations = n + 1;

    while (res.evaluations < max_eval) {
        // order
        std::vector<int> idx(n + 1);
        for (int i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        int lo = idx[0], hi = idx[n], nh = idx[n - 1];
        if (std::abs(vals[hi] - vals[lo]) <= tol * (std::abs(vals[lo]) + tol)) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != hi) centroid += pts[i];
        centroid /= double(n);

        auto try_point = [&](double coeff) {
            Eigen::VectorXd p = centroid + coeff * (pts[hi] - centroid);
            double v = f(p);
            ++res.evaluations;
            return std::make_pair(p, v);
        };

        auto [xr, fr] = try_point(-1.0);
        if (fr < vals[lo]) {
            auto [xe, fe] = try_point(-2.0);
            if (fe < fr) { pts[hi] = xe; vals[hi] = fe; }
            else { pts[hi] = xr; vals[hi] = fr; }
        } else if (fr < vals[nh]) {
            pts[hi] = xr;
            vals[hi] = fr;
        } else {
            auto [xc, fc] = try_point(fr < vals[hi] ? -0.5 : 0.5);
            if (fc < std::min(fr, vals[hi])) {
                pts[hi] = xc;
                vals[hi] = fc;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == lo) continue;
                    pts[i] = pts[lo] + 0.5 * (pts[i] - pts[lo]);
                    vals[i] = f(pts[i]);
                    ++res.evaluations;
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    res.x = pts[best];
    res.value = vals[best];
    return res;
}

inline Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                        double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (int i = 0; i < x.size(); ++i) {
        double hi = h * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + hi;
        double fp = f(xp);
        xp[i] = x[i] - hi;
        double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    return g;
}

/// BFGS with numerical gradients and backtracking line search.
inline OptimResult bfgs_numeric(const Objective& f, Eigen::VectorXd x0, int max_iter = 200,
                                double grad_tol = 1e-6) {
    const int n = int(x0.size());
    OptimResult res;
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd x = std::move(x0);
    double fx = f(x);
    Eigen::VectorXd g = numeric_gradient(f, x);
    res.evaluations = 1 + 2 * n;

    for (int it = 0; it < max_iter; ++it) {
        if (g.norm() <= grad_tol) break;
        Eigen::VectorXd dir = -hinv * g;
        if (dir.dot(g) >= 0.0) dir = -g;  // reset on loss of descent
        double alpha = 1.0;
        double f_new = fx;
        Eigen::VectorXd x_new = x;
        bool ok = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = x + alpha * dir;
            f_new = f(x_new);
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * g.dot(dir)) {
                ok = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!ok) break;
        Eigen::VectorXd g_new = numeric_gradient(f, x_new);
        res.evaluations += 2 * n;
        Eigen::VectorXd s = x_new - x, y = g_new - g;
        double sy = s.dot(y);
        if (sy > 1e-12) {
            Eigen::VectorXd hy = hinv * y;
            double yhy = y.dot(hy);
            hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                    (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        if (std::abs(fx - f_new) <= 1e-14 * (std::abs(fx) + 1e-14)) {
            x = x_new;
            fx = f_new;
            g = g_new;
            break;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    res.x = x;
    res.value = fx;
    return res;
}

}  // namespace lfp
