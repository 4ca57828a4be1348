#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lfp/allocation.hpp"
#include "lfp/autoencoder.hpp"
#include "lfp/garch.hpp"

namespace lfp {

/// Pre-ReLU encoder values z_lin = H'x + b_E and the regime classes
/// c = 1{z_lin <= 0} (boundary inclusive).
struct LinearActivationSeries {
    Eigen::MatrixXd z_lin;                 // T x p
    Eigen::Matrix<int, -1, -1> regimes;    // T x p, 1 = ReLU inactive
};

inline LinearActivationSeries linear_activations(const AutoencoderModel& m,
                                                 const Eigen::MatrixXd& x) {
    if (x.cols() != m.d()) throw std::invalid_argument("linear_activations: dimension mismatch");
    LinearActivationSeries s;
    s.z_lin = (x * m.H).rowwise() + m.b_E.transpose();
    s.regimes = (s.z_lin.array() <= 0.0).cast<int>();
    return s;
}

struct TailClassifier {
    ArmaGarchModel model;
    double threshold = 0.5;   // u
    double train_rate = 0.0;  // alpha, in-sample exceedance rate
};

/// Pick u on the grid {0.01,...,0.99} minimizing |alpha'(u) - alpha| where
/// alpha' is the predicted exceedance rate; ties resolve to the larger u.
inline double calibrate_threshold(const Eigen::VectorXd& probs, const std::vector<int>& classes) {
    if (probs.size() != Eigen::Index(classes.size()) || probs.size() == 0)
        throw std::invalid_argument("calibrate_threshold: misaligned series");
    const double n = double(probs.size());
    double alpha = 0.0;
    for (int c : classes) alpha += c != 0 ? 1.0 : 0.0;
    alpha /= n;

    if ((probs.array() == probs[0]).all()) return 0.5;  // degenerate scores

    double best_u = 0.99, best_gap = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 99; ++k) {
        double u = k / 100.0;
        double predicted = (probs.array() >= u).count() / n;
        double gap = std::abs(predicted - alpha);
        if (gap < best_gap || (gap <= best_gap && u > best_u)) {
            best_gap = gap;
            best_u = u;
        }
    }
    return best_u;
}

/// Zero out the weights of every cluster with a positive signal; the freed
/// weight is reported as cash and not renormalized into remaining assets.
/// `reduction` scales how much of a signaled cluster is cut (default all).
struct HedgedWeights {
    Eigen::VectorXd a;  // asset weights after hedging (same scale as input)
    double cash = 0.0;  // freed fraction
};

inline HedgedWeights hedge_weights(const Eigen::VectorXd& base,
                                   const ClusterAssignment& assignment,
                                   const std::vector<int>& signals, double reduction = 1.0) {
    if (int(signals.size()) != assignment.p)
        throw std::invalid_argument("hedge_weights: one signal per factor required");
    if (reduction < 0.0 || reduction > 1.0)
        throw std::invalid_argument("hedge_weights: reduction outside [0,1]");
    HedgedWeights out{base, 0.0};
    for (size_t i = 0; i < assignment.labels.size(); ++i) {
        int cl = assignment.labels[i];
        if (cl != kUnassigned && signals[cl] != 0) {
            out.cash += base[i] * reduction;
            out.a[i] = base[i] * (1.0 - reduction);
        }
    }
    return out;
}

struct ClassifierValidation {
    std::optional<double> auc;  // absent for single-class test sets
    double predicted_rate = 0.0;
    double true_rate = 0.0;
    double excess_exceedance = 0.0;
    double fpr = 0.0;
    double fnr = 0.0;
};

/// Trapezoidal AUC over the ROC curve plus exceedance-rate diagnostics at
/// threshold u.
inline ClassifierValidation validate_classifier(const Eigen::VectorXd& probs,
                                                const std::vector<int>& classes, double u) {
    if (probs.size() != Eigen::Index(classes.size()) || probs.size() == 0)
        throw std::invalid_argument("validate_classifier: misaligned series");
    ClassifierValidation v;
    const double n = double(probs.size());
    long pos = 0;
    for (int c : classes) pos += c != 0;
    long neg = long(n) - pos;

    v.true_rate = pos / n;
    v.predicted_rate = (probs.array() >= u).count() / n;
    v.excess_exceedance = v.predicted_rate - v.true_rate;

    long fp = 0, fn = 0;
    for (Eigen::Index t = 0; t < probs.size(); ++t) {
        bool pred = probs[t] >= u;
        if (pred && classes[t] == 0) ++fp;
        if (!pred && classes[t] != 0) ++fn;
    }
    v.fpr = neg > 0 ? double(fp) / neg : 0.0;
    v.fnr = pos > 0 ? double(fn) / pos : 0.0;

    if (pos > 0 && neg > 0) {
        // sweep thresholds from high to low; ties handled by grouping equal scores
        std::vector<Eigen::Index> order(probs.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](Eigen::Index a, Eigen::Index b) { return probs[a] > probs[b]; });
        double auc = 0.0;
        double tp = 0, fpc = 0, tp_prev = 0, fp_prev = 0;
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            while (j < order.size() && probs[order[j]] == probs[order[i]]) {
                if (classes[order[j]] != 0) ++tp; else ++fpc;
                ++j;
            }
            auc += (fpc - fp_prev) / double(neg) * (tp + tp_prev) / (2.0 * double(pos));
            tp_prev = tp;
            fp_prev = fpc;
            i = j;
        }
        v.auc = auc;
    }
    return v;
}

}  // namespace lfp
