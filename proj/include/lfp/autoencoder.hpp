#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfp/nmf.hpp"
#include "lfp/panel.hpp"

namespace lfp {

/// Single-hidden-layer ReLU autoencoder x ~ W relu(H'x + b_E) + b_D with
/// nonnegative, unit-norm columns in both H and W.
struct AutoencoderModel {
    Eigen::MatrixXd H;    // d x p encoder weights
    Eigen::VectorXd b_E;  // p
    Eigen::MatrixXd W;    // d x p decoder weights
    Eigen::VectorXd b_D;  // d
    Eigen::VectorXd bn_mean;  // running factor mean (momentum 0.9)
    Eigen::VectorXd bn_var;   // running factor variance
    int p = 0;

    Eigen::Index d() const { return H.rows(); }
};

struct TrainConfig {
    double lambda1 = 1e-3;
    double lambda2 = 1e-2;
    double lambda3 = 1e-2;
    double eta = 1e-3;
    int epochs = 1000;
    int batch_size = 32;
    int patience = 100;
    int n_seeds = 15;
    Eigen::Index block_length = 60;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void check() const {
        if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
            throw std::invalid_argument("TrainConfig: negative penalty weight");
        if (eta <= 0 || epochs < 1 || batch_size < 2 || n_seeds < 1 || block_length < 1)
            throw std::invalid_argument("TrainConfig: nonpositive field");
        if (patience > epochs) throw std::invalid_argument("TrainConfig: patience > epochs");
    }
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_rmse;
    int stopping_epoch = 0;  // index of the restored best epoch
    std::uint64_t seed = 0;
    int reinitialized_columns = 0;
};

inline Eigen::VectorXd encode(const AutoencoderModel& m, const Eigen::VectorXd& x) {
    if (x.size() != m.d()) throw std::invalid_argument("encode: dimension mismatch");
    return (m.H.transpose() * x + m.b_E).cwiseMax(0.0);
}

inline Eigen::VectorXd decode(const AutoencoderModel& m, const Eigen::VectorXd& z) {
    if (z.size() != m.p) throw std::invalid_argument("decode: dimension mismatch");
    return m.W * z + m.b_D;
}

/// Row-wise encoder over a T x d matrix; returns T x p factors.
inline Eigen::MatrixXd encode_matrix(const AutoencoderModel& m, const Eigen::MatrixXd& x) {
    if (x.cols() != m.d()) throw std::invalid_argument("encode_matrix: dimension mismatch");
    return ((x * m.H).rowwise() + m.b_E.transpose()).cwiseMax(0.0);
}

inline Eigen::MatrixXd reconstruct(const AutoencoderModel& m, const Eigen::MatrixXd& x) {
    return (encode_matrix(m, x) * m.W.transpose()).rowwise() + m.b_D.transpose();
}

struct LossGrad {
    double loss = 0.0;
    double mse = 0.0;
    Eigen::MatrixXd dH, dW;
    Eigen::VectorXd db_E, db_D;
    Eigen::VectorXd batch_mean, batch_var;  // factor batch statistics (ddof 1)
};

/// MSE + L1(H, W) + lambda2 ||W'W - I||_F + lambda3 * sum of squared
/// off-diagonal batch factor correlations, with analytic gradients.
inline LossGrad penalized_loss(const AutoencoderModel& m, const Eigen::MatrixXd& batch,
                               const TrainConfig& cfg) {
    const Eigen::Index bsz = batch.rows();
    if (bsz < 2) throw std::invalid_argument("penalized_loss: batch needs >= 2 rows");
    const Eigen::Index d = m.d();
    const int p = m.p;
    if (batch.cols() != d) throw std::invalid_argument("penalized_loss: dimension mismatch");

    LossGrad out;
    Eigen::MatrixXd pre = (batch * m.H).rowwise() + m.b_E.transpose();  // B x p
    Eigen::MatrixXd z = pre.cwiseMax(0.0);
    Eigen::MatrixXd xhat = (z * m.W.transpose()).rowwise() + m.b_D.transpose();
    Eigen::MatrixXd resid = xhat - batch;

    out.mse = resid.squaredNorm() / double(bsz);
    out.loss = out.mse;

    Eigen::MatrixXd d_xhat = 2.0 * resid / double(bsz);
    out.dW = d_xhat.transpose() * z;
    out.db_D = d_xhat.colwise().sum();
    Eigen::MatrixXd dz = d_xhat * m.W;

    // L1 (subgradient 0 at 0)
    if (cfg.lambda1 > 0.0) {
        out.loss += cfg.lambda1 * (m.H.cwiseAbs().sum() + m.W.cwiseAbs().sum());
        out.dW += cfg.lambda1 * m.W.array().sign().matrix();
    }

    // soft orthogonality ||W'W - I||_F
    Eigen::MatrixXd dH_l1 = Eigen::MatrixXd::Zero(d, p);
    if (cfg.lambda1 > 0.0) dH_l1 = cfg.lambda1 * m.H.array().sign().matrix();
    if (cfg.lambda2 > 0.0) {
        Eigen::MatrixXd gram = m.W.transpose() * m.W - Eigen::MatrixXd::Identity(p, p);
        double fro = gram.norm();
        out.loss += cfg.lambda2 * fro;
        if (fro > 0.0) out.dW += cfg.lambda2 * 2.0 * (m.W * gram) / fro;
    }

    // factor decorrelation on batch-normalized factors
    out.batch_mean = z.colwise().mean();
    Eigen::MatrixXd centered = z.rowwise() - out.batch_mean.transpose();
    out.batch_var = centered.array().square().colwise().sum() / double(bsz - 1);
    if (cfg.lambda3 > 0.0 && p > 1) {
        Eigen::VectorXd scale = (out.batch_var.array() + 1e-12).sqrt();
        Eigen::MatrixXd zn = centered.array().rowwise() / scale.transpose().array();
        Eigen::MatrixXd corr = zn.transpose() * zn / double(bsz - 1);
        Eigen::MatrixXd off = corr;
        off.diagonal().setZero();
        out.loss += cfg.lambda3 * off.squaredNorm();
        // dP/dzn, then batchnorm backward per column
        Eigen::MatrixXd d_zn = zn * (2.0 * cfg.lambda3 * 2.0 * off) / double(bsz - 1);
        for (int k = 0; k < p; ++k) {
            double mean_d = d_zn.col(k).mean();
            double dot = d_zn.col(k).dot(zn.col(k)) / double(bsz - 1);
            dz.col(k) +=
                (d_zn.col(k).array() - mean_d - zn.col(k).array() * dot).matrix() / scale[k];
        }
    }

    Eigen::MatrixXd da = (pre.array() > 0.0).cast<double>() * dz.array();
    out.dH = batch.transpose() * da + dH_l1;
    out.db_E = da.colwise().sum();

    if (!std::isfinite(out.loss)) throw std::runtime_error("penalized_loss: non-finite loss");
    return out;
}

/// Clip negative weights and rescale every column of H and W to unit norm.
/// Columns that collapse to zero are restored from the warm start; returns the
/// number of restored columns.
inline int project_constraints(AutoencoderModel& m, const Eigen::MatrixXd* warm_h = nullptr,
                               const Eigen::MatrixXd* warm_w = nullptr) {
    int reinit = 0;
    auto fix = [&](Eigen::MatrixXd& mat, const Eigen::MatrixXd* warm) {
        mat = mat.cwiseMax(0.0);
        for (int k = 0; k < mat.cols(); ++k) {
            double norm = mat.col(k).norm();
            if (norm <= 0.0) {
                if (!warm)
                    throw std::runtime_error("project_constraints: column " + std::to_string(k) +
                                             " collapsed and no warm start available");
                mat.col(k) = warm->col(k).cwiseMax(1e-6);
                norm = mat.col(k).norm();
                ++reinit;
            }
            mat.col(k) /= norm;
        }
    };
    fix(m.H, warm_h);
    fix(m.W, warm_w);
    return reinit;
}

namespace detail {

struct AdamState {
    Eigen::MatrixXd mH, vH, mW, vW;
    Eigen::VectorXd mbE, vbE, mbD, vbD;
    long step = 0;

    explicit AdamState(const AutoencoderModel& m)
        : mH(Eigen::MatrixXd::Zero(m.H.rows(), m.H.cols())), vH(mH), mW(mH), vW(mH),
          mbE(Eigen::VectorXd::Zero(m.b_E.size())), vbE(mbE),
          mbD(Eigen::VectorXd::Zero(m.b_D.size())), vbD(mbD) {}

    template <typename T>
    void update_one(T& param, const T& grad, T& mom, T& vel, const TrainConfig& cfg,
                    double corr1, double corr2) {
        mom = cfg.adam_beta1 * mom + (1.0 - cfg.adam_beta1) * grad;
        vel = cfg.adam_beta2 * vel + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
        param.array() -= cfg.eta * (mom.array() / corr1) /
                         ((vel.array() / corr2).sqrt() + cfg.adam_eps);
    }

    void apply(AutoencoderModel& m, const LossGrad& g, const TrainConfig& cfg) {
        ++step;
        double corr1 = 1.0 - std::pow(cfg.adam_beta1, double(step));
        double corr2 = 1.0 - std::pow(cfg.adam_beta2, double(step));
        update_one(m.H, g.dH, mH, vH, cfg, corr1, corr2);
        update_one(m.W, g.dW, mW, vW, cfg, corr1, corr2);
        update_one(m.b_E, g.db_E, mbE, vbE, cfg, corr1, corr2);
        update_one(m.b_D, g.db_D, mbD, vbD, cfg, corr1, corr2);
    }
};

}  // namespace detail

inline AutoencoderModel init_from_nmf(const ConvexNmfModel& warm) {
    AutoencoderModel m;
    m.p = warm.p;
    m.H = warm.H;
    m.W = warm.W;
    m.b_E = Eigen::VectorXd::Zero(warm.p);
    m.b_D = Eigen::VectorXd::Zero(warm.W.rows());
    m.bn_mean = Eigen::VectorXd::Zero(warm.p);
    m.bn_var = Eigen::VectorXd::Ones(warm.p);
    project_constraints(m);
    return m;
}

/// Adam training on fresh block-bootstrap resamples each epoch, constraint
/// projection after every step, early stopping on the validation penalized
/// loss with best-epoch restore. Deterministic given (data, cfg, seed).
inline std::pair<AutoencoderModel, TrainReport> train(const Eigen::MatrixXd& train_data,
                                                      const Eigen::MatrixXd& validation,
                                                      const TrainConfig& cfg,
                                                      const ConvexNmfModel& warm_start,
                                                      std::uint64_t seed) {
    cfg.check();
    if (warm_start.W.rows() != train_data.cols())
        throw std::invalid_argument("train: warm start dimension mismatch");
    if (validation.rows() < 2) throw std::invalid_argument("train: validation needs >= 2 rows");

    AutoencoderModel model = init_from_nmf(warm_start);
    const Eigen::MatrixXd warm_h = model.H, warm_w = model.W;
    detail::AdamState adam(model);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 1);

    TrainReport report;
    report.seed = seed;
    AutoencoderModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    const Eigen::Index t = train_data.rows();
    std::vector<Eigen::Index> index(t);
    std::iota(index.begin(), index.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Eigen::MatrixXd boot = block_bootstrap_matrix(train_data, cfg.block_length, rng);
        std::shuffle(index.begin(), index.end(), rng);

        double epoch_loss = 0.0;
        int batches = 0;
        for (Eigen::Index start = 0; start + 2 <= t; start += cfg.batch_size) {
            Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, t - start);
            if (bsz < 2) break;
            Eigen::MatrixXd batch(bsz, boot.cols());
            for (Eigen::Index i = 0; i < bsz; ++i) batch.row(i) = boot.row(index[start + i]);

            LossGrad g = penalized_loss(model, batch, cfg);
            adam.apply(model, g, cfg);
            report.reinitialized_columns += project_constraints(model, &warm_h, &warm_w);
            model.bn_mean = 0.9 * model.bn_mean + 0.1 * g.batch_mean;
            model.bn_var = 0.9 * model.bn_var + 0.1 * g.batch_var;
            epoch_loss += g.loss;
            ++batches;
        }
        report.train_loss.push_back(epoch_loss / std::max(batches, 1));

        LossGrad val = penalized_loss(model, validation, cfg);
        report.val_loss.push_back(val.loss);
        report.val_rmse.push_back(std::sqrt(val.mse / double(train_data.cols())));
        if (!std::isfinite(val.loss))
            throw std::runtime_error("train: divergence at epoch " + std::to_string(epoch) +
                                     " (seed " + std::to_string(seed) + ")");

        if (val.loss < best_val) {
            best_val = val.loss;
            best = model;
            best_epoch = epoch;
        } else if (epoch - best_epoch > cfg.patience) {
            break;
        }
    }
    report.stopping_epoch = best_epoch;
    return {best, report};
}

/// Independent trainings with seeds seed0..seed0+n_seeds-1; downstream
/// portfolio weights (not parameters) are averaged by the caller.
inline std::vector<std::pair<AutoencoderModel, TrainReport>> train_ensemble(
    const Eigen::MatrixXd& train_data, const Eigen::MatrixXd& validation, int p,
    const TrainConfig& cfg, std::uint64_t seed0, int nmf_max_iter = 500) {
    std::vector<std::pair<AutoencoderModel, TrainReport>> out;
    for (int s = 0; s < cfg.n_seeds; ++s) {
        std::uint64_t seed = seed0 + std::uint64_t(s);
        auto warm = fit_convex_nmf(train_data, p, nmf_max_iter, 1e-6, seed);
        out.push_back(train(train_data, validation, cfg, warm, seed));
    }
    return out;
}

/// Text dump mirroring the NMF format: "d p" header, W rows, H rows, then
/// b_E, b_D, batchnorm mean and variance lines.
inline void save_autoencoder(const AutoencoderModel& m, std::ostream& os) {
    os.precision(17);
    os << m.d() << " " << m.p << "\n";
    auto dump = [&](const Eigen::MatrixXd& mat) {
        for (Eigen::Index i = 0; i < mat.rows(); ++i) {
            for (Eigen::Index k = 0; k < mat.cols(); ++k) os << (k ? " " : "") << mat(i, k);
            os << "\n";
        }
    };
    dump(m.W);
    dump(m.H);
    dump(m.b_E.transpose());
    dump(m.b_D.transpose());
    dump(m.bn_mean.transpose());
    dump(m.bn_var.transpose());
}

inline AutoencoderModel load_autoencoder(std::istream& is) {
    AutoencoderModel m;
    Eigen::Index d;
    if (!(is >> d >> m.p)) throw std::runtime_error("load_autoencoder: bad header");
    auto read = [&](Eigen::MatrixXd& mat, Eigen::Index r, Eigen::Index c) {
        mat.resize(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index k = 0; k < c; ++k)
                if (!(is >> mat(i, k))) throw std::runtime_error("load_autoencoder: truncated");
    };
    Eigen::MatrixXd tmp;
    read(m.W, d, m.p);
    read(m.H, d, m.p);
    read(tmp, 1, m.p);
    m.b_E = tmp.row(0);
    read(tmp, 1, d);
    m.b_D = tmp.row(0);
    read(tmp, 1, m.p);
    m.bn_mean = tmp.row(0);
    read(tmp, 1, m.p);
    m.bn_var = tmp.row(0);
    return m;
}

}  // namespace lfp
