#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfp/clustering.hpp"

namespace lfp {

/// Long-only weight vector, nonnegative and summing to 1 (pre-leverage).
struct AllocationWeights {
    Eigen::VectorXd a;
    std::string strategy;

    void check() const {
        if ((a.array() < -1e-12).any())
            throw std::logic_error("allocation: negative weight in " + strategy);
        if (std::abs(a.sum() - 1.0) > 1e-9)
            throw std::logic_error("allocation: weights do not sum to 1 in " + strategy);
    }
};

struct CovarianceEstimate {
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd corr;
    Eigen::Index window = 0;
};

/// Sample covariance (ddof 1) and the implied correlation matrix.
inline CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& window) {
    if (window.rows() < 2) throw std::invalid_argument("estimate_covariance: window < 2 rows");
    Eigen::MatrixXd centered = window.rowwise() - window.colwise().mean();
    CovarianceEstimate c;
    c.sigma = centered.transpose() * centered / double(window.rows() - 1);
    c.window = window.rows();
    // zero-variance columns get a unit diagonal / zero off-diagonal row so a
    // degenerate panel still yields a usable correlation matrix
    Eigen::VectorXd s = c.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd inv = s;
    for (Eigen::Index i = 0; i < s.size(); ++i) inv[i] = s[i] > 0.0 ? 1.0 / s[i] : 0.0;
    c.corr = inv.asDiagonal() * c.sigma * inv.asDiagonal();
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] <= 0.0) c.corr(i, i) = 1.0;
    return c;
}

inline AllocationWeights inverse_variance_weights(const Eigen::MatrixXd& sigma) {
    Eigen::VectorXd diag = sigma.diagonal();
    if ((diag.array() <= 0.0).any())
        throw std::invalid_argument("inverse_variance_weights: nonpositive diagonal");
    AllocationWeights w{diag.cwiseInverse(), "ivp"};
    w.a /= w.a.sum();
    return w;
}

/// Relative risk contributions RRC_i = a_i (Sigma a)_i / (a' Sigma a); sums to 1.
inline Eigen::VectorXd risk_contributions(const Eigen::VectorXd& a, const Eigen::MatrixXd& sigma) {
    Eigen::VectorXd sa = sigma * a;
    double var = a.dot(sa);
    if (!(var > 0.0)) throw std::invalid_argument("risk_contributions: zero portfolio variance");
    return a.cwiseProduct(sa) / var;
}

/// Solve for long-only weights with RRC_i = b_i. Damped Newton on the
/// log-barrier problem min 1/2 y'Sy - sum b_i ln y_i, with a cyclical
/// coordinate-descent fallback; the stationary point has y_i (Sy)_i = b_i.
inline AllocationWeights risk_budgeting_weights(const Eigen::MatrixXd& sigma,
                                                const Eigen::VectorXd& budgets,
                                                double tol = 1e-10, int max_iter = 10000) {
    const Eigen::Index d = sigma.rows();
    if (budgets.size() != d) throw std::invalid_argument("risk_budgeting: size mismatch");
    if ((budgets.array() <= 0.0).any())
        throw std::invalid_argument("risk_budgeting: budgets must be strictly positive");
    Eigen::VectorXd b = budgets / budgets.sum();

    Eigen::VectorXd y = b.array().sqrt() / sigma.diagonal().array().sqrt();
    auto grad = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return sigma * v - b.cwiseQuotient(v);
    };
    auto residual = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd rrc = risk_contributions(v, sigma);
        return (rrc - b).cwiseAbs().maxCoeff();
    };

    int it = 0;
    for (; it < max_iter; ++it) {
        Eigen::VectorXd g = grad(y);
        if (residual(y) < tol) break;
        Eigen::MatrixXd hess = sigma;
        hess.diagonal() += b.cwiseQuotient(y.cwiseAbs2());
        Eigen::VectorXd step = hess.ldlt().solve(-g);
        double alpha = 1.0;
        // keep y strictly positive and the barrier objective non-increasing
        auto obj = [&](const Eigen::VectorXd& v) {
            return 0.5 * v.dot(sigma * v) - b.dot(v.array().log().matrix());
        };
        double f0 = obj(y);
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            Eigen::VectorXd cand = y + alpha * step;
            if ((cand.array() > 0.0).all() && obj(cand) <= f0) {
                y = cand;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            // coordinate-descent fallback pass
            for (Eigen::Index i = 0; i < d; ++i) {
                double ci = (sigma.row(i) * y) - sigma(i, i) * y[i];
                double disc = ci * ci + 4.0 * sigma(i, i) * b[i];
                y[i] = (-ci + std::sqrt(disc)) / (2.0 * sigma(i, i));
            }
        }
    }
    if (residual(y) >= tol) {
        // final cyclical coordinate sweeps
        for (int sweep = 0; sweep < max_iter && residual(y) >= tol; ++sweep)
            for (Eigen::Index i = 0; i < d; ++i) {
                double ci = (sigma.row(i) * y) - sigma(i, i) * y[i];
                double disc = ci * ci + 4.0 * sigma(i, i) * b[i];
                y[i] = (-ci + std::sqrt(disc)) / (2.0 * sigma(i, i));
            }
    }
    if (residual(y) >= tol)
        throw std::runtime_error("risk_budgeting: no convergence, residual " +
                                 std::to_string(residual(y)));
    AllocationWeights w{y / y.sum(), "risk_budgeting"};
    return w;
}

inline AllocationWeights erc_weights(const Eigen::MatrixXd& sigma) {
    auto w = risk_budgeting_weights(
        sigma, Eigen::VectorXd::Constant(sigma.rows(), 1.0 / double(sigma.rows())));
    w.strategy = "erc";
    return w;
}

// ---------------------------------------------------------------------------
// Hierarchical methods

namespace detail {

struct LinkNode {
    int left = -1, right = -1;  // children: < d are leaves, >= d internal
    double height = 0.0;
};

/// Single-linkage agglomeration on distance d_ij = sqrt((1 - rho_ij)/2).
inline std::vector<LinkNode> single_linkage(const Eigen::MatrixXd& corr) {
    const int d = int(corr.rows());
    Eigen::MatrixXd dist = ((1.0 - corr.array()) / 2.0).cwiseMax(0.0).sqrt();
    std::vector<int> active;  // node ids
    for (int i = 0; i < d; ++i) active.push_back(i);
    // cluster-to-cluster distances, indexed by position in `active`
    std::vector<std::vector<double>> cd(d, std::vector<double>(d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) cd[i][j] = dist(i, j);

    std::vector<LinkNode> nodes;
    while (active.size() > 1) {
        size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < active.size(); ++i)
            for (size_t j = i + 1; j < active.size(); ++j)
                if (cd[i][j] < best) { best = cd[i][j]; bi = i; bj = j; }
        LinkNode node{active[bi], active[bj], best};
        nodes.push_back(node);
        int id = d + int(nodes.size()) - 1;
        // merge bj into bi with single-linkage (min) distances
        for (size_t k = 0; k < active.size(); ++k)
            if (k != bi && k != bj) cd[bi][k] = cd[k][bi] = std::min(cd[bi][k], cd[bj][k]);
        active[bi] = id;
        active.erase(active.begin() + bj);
        for (auto& row : cd) row.erase(row.begin() + bj);
        cd.erase(cd.begin() + bj);
    }
    return nodes;
}

inline void leaf_order_rec(const std::vector<LinkNode>& nodes, int d, int id,
                           std::vector<int>& out) {
    if (id < d) {
        out.push_back(id);
        return;
    }
    const auto& n = nodes[id - d];
    leaf_order_rec(nodes, d, n.left, out);
    leaf_order_rec(nodes, d, n.right, out);
}

/// Inverse-variance portfolio variance of a covariance block.
inline double cluster_variance_iv(const Eigen::MatrixXd& sigma, const std::vector<int>& idx) {
    Eigen::VectorXd iv(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) iv[i] = 1.0 / sigma(idx[i], idx[i]);
    iv /= iv.sum();
    double v = 0.0;
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = 0; j < idx.size(); ++j) v += iv[i] * sigma(idx[i], idx[j]) * iv[j];
    return v;
}

}  // namespace detail

/// Hierarchical risk parity: single-linkage tree, quasi-diagonal leaf order,
/// recursive bisection with inverse-variance cluster variances.
inline AllocationWeights hrp_weights(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& corr) {
    const int d = int(sigma.rows());
    if (corr.rows() != d || corr.cols() != d)
        throw std::invalid_argument("hrp_weights: shape mismatch");
    AllocationWeights w{Eigen::VectorXd::Ones(d), "hrp"};
    if (d == 1) return w;
    auto nodes = detail::single_linkage(corr);
    std::vector<int> order;
    detail::leaf_order_rec(nodes, d, d + int(nodes.size()) - 1, order);

    struct Segment {
        size_t begin, end;  // half-open range in `order`
    };
    std::vector<Segment> stack{{0, order.size()}};
    while (!stack.empty()) {
        Segment s = stack.back();
        stack.pop_back();
        if (s.end - s.begin <= 1) continue;
        size_t mid = s.begin + (s.end - s.begin) / 2;
        std::vector<int> left(order.begin() + s.begin, order.begin() + mid);
        std::vector<int> right(order.begin() + mid, order.begin() + s.end);
        double vl = detail::cluster_variance_iv(sigma, left);
        double vr = detail::cluster_variance_iv(sigma, right);
        double alpha = 1.0 - vl / (vl + vr);
        for (int i : left) w.a[i] *= alpha;
        for (int i : right) w.a[i] *= (1.0 - alpha);
        stack.push_back({s.begin, mid});
        stack.push_back({mid, s.end});
    }
    w.a /= w.a.sum();
    return w;
}

/// HCAA-style allocation: equal split at every dendrogram node down to leaves.
inline AllocationWeights hcaa_weights(const Eigen::MatrixXd& corr) {
    const int d = int(corr.rows());
    AllocationWeights w{Eigen::VectorXd::Zero(d), "hcaa"};
    if (d == 1) {
        w.a[0] = 1.0;
        return w;
    }
    auto nodes = detail::single_linkage(corr);
    // propagate mass from the root down, halving at each internal node
    std::vector<std::pair<int, double>> stack{{d + int(nodes.size()) - 1, 1.0}};
    while (!stack.empty()) {
        auto [id, mass] = stack.back();
        stack.pop_back();
        if (id < d) {
            w.a[id] = mass;
            continue;
        }
        const auto& n = nodes[id - d];
        stack.push_back({n.left, mass / 2.0});
        stack.push_back({n.right, mass / 2.0});
    }
    return w;
}

// ---------------------------------------------------------------------------
// Factor-model cluster strategies

namespace detail {

inline Eigen::MatrixXd sub_cov(const Eigen::MatrixXd& sigma, const std::vector<int>& idx) {
    Eigen::MatrixXd s(idx.size(), idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = 0; j < idx.size(); ++j) s(i, j) = sigma(idx[i], idx[j]);
    return s;
}

}  // namespace detail

/// Inverse cluster-variance weights c_j, with sigma_j^c2 = w' Sigma_j w and w
/// the intra-cluster inverse-variance vector. Empty clusters get 0.
inline Eigen::VectorXd factor_cluster_weights(const Eigen::MatrixXd& sigma,
                                              const ClusterAssignment& assignment) {
    auto members = assignment.members();
    Eigen::VectorXd inv_var = Eigen::VectorXd::Zero(assignment.p);
    bool any = false;
    for (int j = 0; j < assignment.p; ++j) {
        if (members[j].empty()) continue;
        any = true;
        Eigen::MatrixXd sj = detail::sub_cov(sigma, members[j]);
        Eigen::VectorXd iv = sj.diagonal().cwiseInverse();
        iv /= iv.sum();
        double var_c = iv.dot(sj * iv);
        inv_var[j] = 1.0 / var_c;
    }
    if (!any) throw std::invalid_argument("factor_cluster_weights: all assets unassigned");
    return inv_var / inv_var.sum();
}

/// Risk-parity-over-clusters: inverse-variance within each cluster, inverse
/// cluster-variance across clusters. Unassigned assets get weight 0.
inline AllocationWeights aerp_weights(const Eigen::MatrixXd& sigma,
                                      const ClusterAssignment& assignment) {
    auto members = assignment.members();
    Eigen::VectorXd c = factor_cluster_weights(sigma, assignment);
    AllocationWeights w{Eigen::VectorXd::Zero(sigma.rows()),
                        assignment.source == ClusterSource::Nmf ? "nmfrp" : "aerp"};
    for (int j = 0; j < assignment.p; ++j) {
        if (members[j].empty()) continue;
        Eigen::VectorXd iv(members[j].size());
        for (size_t i = 0; i < members[j].size(); ++i)
            iv[i] = 1.0 / sigma(members[j][i], members[j][i]);
        iv /= iv.sum();
        for (size_t i = 0; i < members[j].size(); ++i) w.a[members[j][i]] = iv[i] * c[j];
    }
    w.a /= w.a.sum();
    return w;
}

/// Loading-budgeted risk contribution within clusters: budget b_i proportional
/// to w_ij^2 renormalized over the cluster, floored at 1e-6 to stay positive.
inline AllocationWeights aercw_weights(const Eigen::MatrixXd& sigma,
                                       const ClusterAssignment& assignment,
                                       const Eigen::MatrixXd& loadings) {
    auto members = assignment.members();
    Eigen::VectorXd c = factor_cluster_weights(sigma, assignment);
    AllocationWeights w{Eigen::VectorXd::Zero(sigma.rows()),
                        assignment.source == ClusterSource::Nmf ? "nmfrcw" : "aercw"};
    for (int j = 0; j < assignment.p; ++j) {
        if (members[j].empty()) continue;
        Eigen::VectorXd budget(members[j].size());
        for (size_t i = 0; i < members[j].size(); ++i)
            budget[i] = std::max(loadings(members[j][i], j) * loadings(members[j][i], j), 1e-6);
        budget /= budget.sum();
        Eigen::MatrixXd sj = detail::sub_cov(sigma, members[j]);
        Eigen::VectorXd intra =
            members[j].size() == 1 ? Eigen::VectorXd::Ones(1)
                                   : risk_budgeting_weights(sj, budget).a;
        for (size_t i = 0; i < members[j].size(); ++i) w.a[members[j][i]] = intra[i] * c[j];
    }
    w.a /= w.a.sum();
    return w;
}

/// Count-based allocation: 1/p per nonempty cluster, equal within a cluster.
inline AllocationWeights aeaa_weights(const ClusterAssignment& assignment) {
    auto members = assignment.members();
    AllocationWeights w{Eigen::VectorXd::Zero(assignment.labels.size()),
                        assignment.source == ClusterSource::Nmf
                            ? "nmfaa"
                            : (assignment.source == ClusterSource::KMeans ? "kmaa" : "aeaa")};
    bool any = false;
    for (int j = 0; j < assignment.p; ++j) {
        if (members[j].empty()) continue;
        any = true;
        for (int i : members[j]) w.a[i] = 1.0 / (double(assignment.p) * members[j].size());
    }
    if (!any) throw std::invalid_argument("aeaa_weights: all assets unassigned");
    w.a /= w.a.sum();
    return w;
}

inline AllocationWeights kmaa_weights(const Eigen::MatrixXd& x, int p, std::uint64_t seed) {
    auto w = aeaa_weights(kmeans_assets(x, p, seed));
    w.strategy = "kmaa";
    return w;
}

/// Long-only minimum variance via projected gradient: min a'Sa s.t. sum a = 1,
/// a >= 0, to a 1e-8 KKT residual.
inline AllocationWeights markowitz_weights(const Eigen::MatrixXd& sigma, double kkt_tol = 1e-8,
                                           int max_iter = 200000) {
    const Eigen::Index d = sigma.rows();
    Eigen::VectorXd a = Eigen::VectorXd::Constant(d, 1.0 / double(d));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    double lip = std::max(es.eigenvalues().maxCoeff(), 1e-16);
    double step = 1.0 / lip;

    auto project_simplex = [&](Eigen::VectorXd v) {
        std::vector<double> u(v.data(), v.data() + v.size());
        std::sort(u.begin(), u.end(), std::greater<double>());
        double css = 0.0, theta = 0.0;
        int rho = 0;
        for (int i = 0; i < int(u.size()); ++i) {
            css += u[i];
            double t = (css - 1.0) / (i + 1);
            if (u[i] - t > 0) { rho = i + 1; theta = t; }
        }
        (void)rho;
        return (v.array() - theta).cwiseMax(0.0).matrix().eval();
    };
    auto kkt_residual = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd g = 2.0 * sigma * v;
        double lambda = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < d; ++i)
            if (v[i] > 1e-12) lambda = std::min(lambda, g[i]);
        double res = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (v[i] > 1e-12)
                res = std::max(res, std::abs(g[i] - lambda));
            else
                res = std::max(res, std::max(0.0, lambda - g[i]));
        }
        return res;
    };

    // Nesterov-accelerated projected gradient with adaptive restarts
    Eigen::VectorXd z = a;
    double t_prev = 1.0;
    int pg_iter = std::min(max_iter, 5000);
    for (int it = 0; it < pg_iter; ++it) {
        Eigen::VectorXd g = 2.0 * sigma * z;
        Eigen::VectorXd a_next = project_simplex(z - step * g);
        if (g.dot(a_next - a) > 0.0) {  // momentum points uphill: restart
            t_prev = 1.0;
            z = a_next;
        } else {
            double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0;
            z = a_next + ((t_prev - 1.0) / t_next) * (a_next - a);
            t_prev = t_next;
        }
        a = a_next;
        if (it % 50 == 0 && kkt_residual(a) < kkt_tol) break;
    }

    // active-set polish: equality-solve on the support, then exchange
    // violated bound / negativity constraints until the KKT system holds
    if (kkt_residual(a) >= kkt_tol) {
        std::vector<bool> support(static_cast<size_t>(d));
        for (Eigen::Index i = 0; i < d; ++i) support[size_t(i)] = a[i] > 1e-9;
        for (int pass = 0; pass < 8 * int(d); ++pass) {
            std::vector<Eigen::Index> s;
            for (Eigen::Index i = 0; i < d; ++i)
                if (support[size_t(i)]) s.push_back(i);
            if (s.empty()) break;
            Eigen::MatrixXd ss(s.size(), s.size());
            for (size_t r = 0; r < s.size(); ++r)
                for (size_t c = 0; c < s.size(); ++c) ss(r, c) = sigma(s[r], s[c]);
            Eigen::VectorXd w = ss.ldlt().solve(Eigen::VectorXd::Ones(s.size()));
            double total = w.sum();
            if (!(std::abs(total) > 0.0) || !w.allFinite()) break;
            w /= total;
            Eigen::Index worst = -1;
            double most_neg = -1e-12;
            for (size_t r = 0; r < s.size(); ++r)
                if (w[r] < most_neg) { most_neg = w[r]; worst = s[r]; }
            if (worst >= 0) {  // drop the most negative weight and re-solve
                support[size_t(worst)] = false;
                continue;
            }
            Eigen::VectorXd cand = Eigen::VectorXd::Zero(d);
            for (size_t r = 0; r < s.size(); ++r) cand[s[r]] = w[r];
            Eigen::VectorXd g = 2.0 * sigma * cand;
            double lambda = 0.0;
            for (size_t r = 0; r < s.size(); ++r) lambda += g[s[r]] * w[r];
            Eigen::Index enter = -1;
            double most_viol = kkt_tol;
            for (Eigen::Index i = 0; i < d; ++i)
                if (!support[size_t(i)] && lambda - g[i] > most_viol) {
                    most_viol = lambda - g[i];
                    enter = i;
                }
            a = cand;
            if (enter < 0) break;  // KKT satisfied
            support[size_t(enter)] = true;
        }
    }
    if (kkt_residual(a) >= kkt_tol)
        throw std::runtime_error("markowitz_weights: KKT residual " +
                                 std::to_string(kkt_residual(a)));
    return {a, "markowitz"};
}

inline AllocationWeights equal_weights(Eigen::Index d) {
    return {Eigen::VectorXd::Constant(d, 1.0 / double(d)), "equal"};
}

/// 1/(n_classes * class size) per asset.
inline AllocationWeights equal_class_weights(const std::vector<std::string>& class_labels) {
    std::map<std::string, int> counts;
    for (const auto& c : class_labels) ++counts[c];
    AllocationWeights w{Eigen::VectorXd(class_labels.size()), "equal_class"};
    for (size_t i = 0; i < class_labels.size(); ++i)
        w.a[i] = 1.0 / (double(counts.size()) * counts[class_labels[i]]);
    return w;
}

}  // namespace lfp
