#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfp/kmeans.hpp"
#include "lfp/nmf.hpp"
#include "lfp/panel.hpp"

namespace lfp {

inline constexpr int kUnassigned = -1;
inline constexpr double kAssignmentEpsilon = 1e-4;

enum class ClusterSource { Nmf, Autoencoder, KMeans };

struct ClusterAssignment {
    std::vector<int> labels;  // cluster index in [0, p) or kUnassigned
    int p = 0;
    ClusterSource source = ClusterSource::Nmf;

    std::vector<std::vector<int>> members() const {
        std::vector<std::vector<int>> out(p);
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] != kUnassigned) out[labels[i]].push_back(int(i));
        return out;
    }
};

/// Argmax-row rule on a nonnegative loading matrix. Rows whose maximum is at
/// or below `eps` stay unassigned; ties break to the lowest factor index.
inline ClusterAssignment assign_clusters(const Eigen::MatrixXd& w,
                                         double eps = kAssignmentEpsilon,
                                         ClusterSource source = ClusterSource::Nmf) {
    if ((w.array() < 0.0).any()) throw std::invalid_argument("assign_clusters: negative loading");
    ClusterAssignment a;
    a.p = int(w.cols());
    a.source = source;
    a.labels.resize(w.rows());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        int arg = 0;
        double best = w(i, 0);
        for (Eigen::Index k = 1; k < w.cols(); ++k)
            if (w(i, k) > best) { best = w(i, k); arg = int(k); }
        a.labels[i] = (best <= eps) ? kUnassigned : arg;
    }
    return a;
}

namespace detail {

// Unassigned assets become their own singleton labels.
inline std::vector<int> effective_labels(const std::vector<int>& labels) {
    std::vector<int> out = labels;
    int next = 0;
    for (int l : labels) next = std::max(next, l + 1);
    for (auto& l : out)
        if (l == kUnassigned) l = next++;
    return out;
}

}  // namespace detail

/// Pair-counting adjusted Rand index with expected-index correction.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() || a.size() != b.size())
        throw std::invalid_argument("adjusted_rand_index: empty or mismatched labelings");
    auto la = detail::effective_labels(a);
    auto lb = detail::effective_labels(b);
    std::map<std::pair<int, int>, long long> cont;
    std::map<int, long long> ra, rb;
    for (size_t i = 0; i < la.size(); ++i) {
        ++cont[{la[i], lb[i]}];
        ++ra[la[i]];
        ++rb[lb[i]];
    }
    auto c2 = [](long long n) { return double(n) * double(n - 1) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (auto& [k, v] : cont) sum_ij += c2(v);
    for (auto& [k, v] : ra) sum_a += c2(v);
    for (auto& [k, v] : rb) sum_b += c2(v);
    double n2 = c2(static_cast<long long>(la.size()));
    double expected = sum_a * sum_b / n2;
    double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (sum_ij - expected) / (max_index - expected);
}

/// K-means over asset return series (columns of the T x d matrix).
inline ClusterAssignment kmeans_assets(const Eigen::MatrixXd& x, int p, std::uint64_t seed) {
    auto km = kmeans_points(x.transpose(), p, seed);
    ClusterAssignment a;
    a.p = p;
    a.source = ClusterSource::KMeans;
    a.labels = km.labels;
    return a;
}

/// Entry (i,j) = fraction of assignments in which i and j share a cluster.
/// Unassigned assets never co-cluster (their diagonal stays at the share of
/// assignments where they are assigned, i.e. 0 if never assigned).
inline Eigen::MatrixXd consensus_matrix(const std::vector<ClusterAssignment>& assignments) {
    if (assignments.empty()) throw std::invalid_argument("consensus_matrix: no assignments");
    const size_t d = assignments.front().labels.size();
    for (const auto& a : assignments)
        if (a.labels.size() != d) throw std::invalid_argument("consensus_matrix: inconsistent d");
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    for (const auto& a : assignments)
        for (size_t i = 0; i < d; ++i) {
            if (a.labels[i] == kUnassigned) continue;
            for (size_t j = 0; j < d; ++j)
                if (a.labels[i] == a.labels[j]) c(i, j) += 1.0;
        }
    return c / double(assignments.size());
}

/// One model-selection candidate: a label plus a fit routine mapping a
/// (bootstrapped, normalized) train window and seed to cluster labels and a
/// validation RMSE.
struct SelectionCandidate {
    std::string name;
    std::function<std::pair<ClusterAssignment, double>(
        const Eigen::MatrixXd& train, const Eigen::MatrixXd& validation, std::uint64_t seed)>
        fit;
};

struct CandidateScore {
    std::string name;
    double mean_rmse = 0.0;
    double mean_ari = 0.0;
    Eigen::MatrixXd consensus;
};

struct SelectionReport {
    std::vector<CandidateScore> scores;
    std::optional<size_t> chosen;  // index into scores; empty if no candidate meets the floor
    double ari_floor = 0.95;
};

/// Validation-window loop shared by factor-count and hyperparameter selection:
/// per window, n_runs fits on block-bootstrap resamples of the train span; one
/// run is drawn as the reference clustering and the others are scored against
/// it with ARI. Chosen = lowest mean RMSE among candidates with ARI >= floor.
inline SelectionReport select_model(const ReturnsPanel& panel, const SplitPlan& splits,
                                    const std::vector<SelectionCandidate>& candidates, int n_runs,
                                    Eigen::Index block_length = 60, std::uint64_t seed = 0,
                                    double ari_floor = 0.95) {
    if (candidates.empty()) throw std::invalid_argument("select_model: no candidates");
    if (n_runs < 1) throw std::invalid_argument("select_model: n_runs must be >= 1");
    SelectionReport report;
    report.ari_floor = ari_floor;

    for (size_t ci = 0; ci < candidates.size(); ++ci) {
        std::mt19937_64 rng(seed + 1);  // same stream for every candidate
        CandidateScore score;
        score.name = candidates[ci].name;
        std::vector<ClusterAssignment> all_assignments;
        double rmse_sum = 0.0, ari_sum = 0.0;
        int rmse_n = 0, ari_n = 0;

        for (const auto& [vstart, vend] : splits.validation_windows) {
            Eigen::Index tr_end = panel.lower_bound(vstart);
            Eigen::Index va_end = panel.lower_bound(vend);
            if (tr_end < 2 || va_end <= tr_end)
                throw std::invalid_argument("select_model: empty train or validation window");
            ReturnsPanel train = panel.slice(0, tr_end);
            Normalizer norm = fit_normalizer(train);
            Eigen::MatrixXd train_n = norm.apply(train.values());
            Eigen::MatrixXd val_n =
                norm.apply(panel.values().middleRows(tr_end, va_end - tr_end));

            std::vector<ClusterAssignment> runs;
            for (int r = 0; r < n_runs; ++r) {
                std::uint64_t run_seed = rng();
                std::mt19937_64 boot_rng(run_seed);
                Eigen::MatrixXd boot = block_bootstrap_matrix(train_n, block_length, boot_rng);
                auto [assignment, rmse_v] = candidates[ci].fit(boot, val_n, run_seed);
                runs.push_back(assignment);
                rmse_sum += rmse_v;
                ++rmse_n;
            }
            std::uniform_int_distribution<int> pick(0, n_runs - 1);
            int ref = pick(rng);
            for (int r = 0; r < n_runs; ++r) {
                if (r == ref && n_runs > 1) continue;
                ari_sum += adjusted_rand_index(runs[r].labels, runs[ref].labels);
                ++ari_n;
            }
            all_assignments.insert(all_assignments.end(), runs.begin(), runs.end());
        }
        score.mean_rmse = rmse_sum / rmse_n;
        score.mean_ari = ari_sum / ari_n;
        score.consensus = consensus_matrix(all_assignments);
        report.scores.push_back(std::move(score));
    }

    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < report.scores.size(); ++i)
        if (report.scores[i].mean_ari >= ari_floor && report.scores[i].mean_rmse < best) {
            best = report.scores[i].mean_rmse;
            report.chosen = i;
        }
    return report;
}

/// Convex-NMF candidate for a given factor count.
inline SelectionCandidate nmf_candidate(int p, int max_iter = 500, double tol = 1e-6) {
    SelectionCandidate c;
    c.name = "p=" + std::to_string(p);
    c.fit = [p, max_iter, tol](const Eigen::MatrixXd& train, const Eigen::MatrixXd& val,
                               std::uint64_t seed) {
        auto model = fit_convex_nmf(train, p, max_iter, tol, seed);
        auto assignment = assign_clusters(model.W);
        double r = rmse(val, reconstruct(model, val));
        return std::make_pair(assignment, r);
    };
    return c;
}

}  // namespace lfp
