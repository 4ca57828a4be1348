#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfp {

struct BacktestConfig {
    double cost_bps = 2.0;
    Eigen::Index estimation_window = 252;
    double vol_target = 0.05;  // annualized
    Eigen::Index vol_lookback_short = 20;
    Eigen::Index vol_lookback_long = 60;
    double annualization = 252.0;
    double max_leverage = 3.0;
    double risk_free = 0.0;
    double risk_aversion = 1.0;  // CEQ gamma
    double alpha = 0.05;         // VaR/ES/minTRL level
};

namespace detail {

inline double sample_std(const Eigen::VectorXd& r) {
    if (r.size() < 2) return 0.0;
    double mu = r.mean();
    return std::sqrt((r.array() - mu).square().sum() / double(r.size() - 1));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard normal CDF (Acklam's rational approximation + one Newton polish).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p out of (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    double q, x;
    if (p < 0.02425) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= 0.97575) {
        q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    x -= e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    return x;
}

/// Empirical quantile with linear interpolation (type 7).
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile: empty");
    std::sort(v.begin(), v.end());
    double pos = q * double(v.size() - 1);
    size_t lo = size_t(std::floor(pos));
    size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - double(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

/// Leverage a_target = vol_target / max(sigma_20, sigma_60) using annualized
/// sample vols of the strategy's own return history. Fewer than the long
/// lookback of observations -> leverage 1 (warm-up); capped at max_leverage.
inline double vol_target_leverage(const Eigen::VectorXd& history, const BacktestConfig& cfg) {
    if (history.size() < cfg.vol_lookback_long) return 1.0;
    double s20 =
        detail::sample_std(history.tail(cfg.vol_lookback_short)) * std::sqrt(cfg.annualization);
    double s60 =
        detail::sample_std(history.tail(cfg.vol_lookback_long)) * std::sqrt(cfg.annualization);
    double realized = std::max(s20, s60);
    if (realized <= 0.0) return cfg.max_leverage;
    return std::min(cfg.vol_target / realized, cfg.max_leverage);
}

/// Probability that the true Sharpe ratio exceeds 0 given sample moments.
inline double probabilistic_sharpe_ratio(double sr, Eigen::Index n, double skew, double kurt) {
    double denom = std::max(1.0 - skew * sr + (kurt - 1.0) / 4.0 * sr * sr, 1e-12);
    return detail::normal_cdf(sr * std::sqrt(double(n - 1)) / std::sqrt(denom));
}

/// Track record length needed for PSR confidence at level alpha.
inline double min_track_record_length(double sr, double skew, double kurt, double alpha = 0.05) {
    if (sr == 0.0) return std::numeric_limits<double>::infinity();
    double denom = std::max(1.0 - skew * sr + (kurt - 1.0) / 4.0 * sr * sr, 1e-12);
    double z = detail::normal_quantile(1.0 - alpha);
    return 1.0 + denom * (z / sr) * (z / sr);
}

/// Performance/diagnostic metrics of a daily return series.
inline std::map<std::string, double> compute_metrics(
    const Eigen::VectorXd& returns, const std::vector<Eigen::VectorXd>& weight_history,
    double risk_free = 0.0, double gamma = 1.0, double alpha = 0.05) {
    if (returns.size() < 2) throw std::invalid_argument("compute_metrics: < 2 returns");
    const Eigen::Index n = returns.size();
    std::map<std::string, double> m;

    double mu = returns.mean();
    double sd = detail::sample_std(returns);
    double sr = sd > 0.0 ? (mu - risk_free) / sd : 0.0;
    // sample skewness / kurtosis (biased, moment definitions)
    Eigen::ArrayXd c = returns.array() - mu;
    double m2 = c.square().mean();
    double skew = m2 > 0.0 ? c.cube().mean() / std::pow(m2, 1.5) : 0.0;
    double kurt = m2 > 0.0 ? c.pow(4).mean() / (m2 * m2) : 3.0;

    std::vector<double> v(returns.data(), returns.data() + n);
    double var = detail::quantile(v, alpha);
    double es_sum = 0.0;
    int es_n = 0;
    for (double r : v)
        if (r <= var) { es_sum += r; ++es_n; }
    double es = es_n > 0 ? es_sum / es_n : var;

    double psr = probabilistic_sharpe_ratio(sr, n, skew, kurt);
    double min_trl = min_track_record_length(sr, skew, kurt, alpha);
    double ceq = (mu - risk_free) - gamma / 2.0 * sd * sd;

    // max drawdown of the compounded curve
    double nav = 1.0, peak = 1.0, mdd = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        nav *= 1.0 + returns[t];
        peak = std::max(peak, nav);
        mdd = std::max(mdd, 1.0 - nav / peak);
    }

    double tto = 0.0, sspw = 0.0;
    if (weight_history.size() >= 2) {
        for (size_t t = 1; t < weight_history.size(); ++t) {
            tto += (weight_history[t] - weight_history[t - 1]).cwiseAbs().sum();
            sspw += weight_history[t].squaredNorm();
        }
        tto /= double(weight_history.size() - 1);
        sspw /= double(weight_history.size() - 1);
    } else if (weight_history.size() == 1) {
        sspw = weight_history[0].squaredNorm();
    }

    m["mean"] = mu;
    m["vol"] = sd;
    m["ann_vol"] = sd * std::sqrt(252.0);
    m["SR"] = sr;
    m["skew"] = skew;
    m["kurtosis"] = kurt;
    m["VaR"] = var;
    m["ES"] = es;
    m["PSR"] = psr;
    m["minTRL"] = min_trl;
    m["CEQ"] = ceq;
    m["MDD"] = mdd;
    m["TTO"] = tto;
    m["SSPW"] = sspw;
    m["total_return"] = nav - 1.0;
    return m;
}

/// 1 - SSE/SST with SST about the sample mean of x.
inline double r_squared(const Eigen::VectorXd& x, const Eigen::VectorXd& xhat) {
    if (x.size() != xhat.size() || x.size() < 2)
        throw std::invalid_argument("r_squared: bad lengths");
    double mu = x.mean();
    double sst = (x.array() - mu).square().sum();
    if (sst <= 0.0) throw std::invalid_argument("r_squared: constant series");
    return 1.0 - (x - xhat).squaredNorm() / sst;
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: bad lengths");
    Eigen::ArrayXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    double den = std::sqrt(ca.square().sum() * cb.square().sum());
    if (den <= 0.0) throw std::invalid_argument("pearson: constant series");
    return (ca * cb).sum() / den;
}

/// Pearson correlation of every (input column, factor column) pair.
inline Eigen::MatrixXd input_factor_correlation(const Eigen::MatrixXd& inputs,
                                                const Eigen::MatrixXd& factors) {
    if (inputs.rows() != factors.rows())
        throw std::invalid_argument("input_factor_correlation: row mismatch");
    Eigen::MatrixXd r(inputs.cols(), factors.cols());
    for (Eigen::Index i = 0; i < inputs.cols(); ++i)
        for (Eigen::Index k = 0; k < factors.cols(); ++k)
            r(i, k) = pearson(inputs.col(i), factors.col(k));
    return r;
}

}  // namespace lfp
