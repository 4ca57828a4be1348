#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfp/optim.hpp"

namespace lfp {

enum class InnovationFamily { Normal, SkewNormal, Student, SkewStudent };

inline bool family_has_skew(InnovationFamily f) {
    return f == InnovationFamily::SkewNormal || f == InnovationFamily::SkewStudent;
}
inline bool family_has_shape(InnovationFamily f) {
    return f == InnovationFamily::Student || f == InnovationFamily::SkewStudent;
}
inline std::string family_name(InnovationFamily f) {
    switch (f) {
        case InnovationFamily::Normal: return "normal";
        case InnovationFamily::SkewNormal: return "skew_normal";
        case InnovationFamily::Student: return "student";
        case InnovationFamily::SkewStudent: return "skew_student";
    }
    return "?";
}

/// Standardized (zero-mean, unit-variance) innovation law. Skewed families use
/// the two-piece inverse-scale construction on the symmetric base density.
class Innovation {
public:
    Innovation(InnovationFamily family, double skew = 1.0, double shape = 10.0)
        : family_(family), skew_(skew), shape_(shape) {
        if (family_has_shape(family_) && !(shape_ > 2.0))
            throw std::invalid_argument("Innovation: Student shape must exceed 2");
        if (family_has_skew(family_) && !(skew_ > 0.0))
            throw std::invalid_argument("Innovation: skew must be positive");
        if (!family_has_skew(family_)) skew_ = 1.0;
        // M1 = E|X| of the unit-variance base
        if (family_has_shape(family_)) {
            double nu = shape_;
            m1_ = 2.0 * std::sqrt(nu - 2.0) *
                  std::exp(std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0)) /
                  (std::sqrt(M_PI) * (nu - 1.0));
            t_scale_ = std::sqrt(nu / (nu - 2.0));  // base = T / t_scale_
        } else {
            m1_ = std::sqrt(2.0 / M_PI);
            t_scale_ = 1.0;
        }
        double g = skew_;
        mean_ = m1_ * (g - 1.0 / g);
        double ex2 = g * g + 1.0 / (g * g) - 1.0;
        sd_ = std::sqrt(ex2 - mean_ * mean_);
    }

    InnovationFamily family() const { return family_; }
    double skew() const { return skew_; }
    double shape() const { return shape_; }

    double log_pdf(double z) const {
        double x = mean_ + sd_ * z;  // unstandardized two-piece variable
        double g = skew_;
        double arg = x >= 0.0 ? x / g : x * g;
        return std::log(sd_) + std::log(2.0 / (g + 1.0 / g)) + base_log_pdf(arg);
    }

    double cdf(double z) const {
        double x = mean_ + sd_ * z;
        double g = skew_;
        double g2 = g * g;
        if (x < 0.0) return 2.0 / (g2 + 1.0) * base_cdf(x * g);
        return 1.0 / (g2 + 1.0) + (2.0 * g2 / (g2 + 1.0)) * (base_cdf(x / g) - 0.5);
    }

    template <typename Rng>
    double sample(Rng& rng) const {
        double base;
        if (family_has_shape(family_)) {
            std::student_t_distribution<double> t(shape_);
            base = t(rng) / t_scale_;
        } else {
            std::normal_distribution<double> n(0.0, 1.0);
            base = n(rng);
        }
        double g = skew_;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double x = (u(rng) < g * g / (g * g + 1.0)) ? g * std::abs(base) : -std::abs(base) / g;
        return (x - mean_) / sd_;
    }

private:
    double base_log_pdf(double x) const {
        if (family_has_shape(family_)) {
            // unit-variance Student: density of T/t_scale_
            double nu = shape_;
            double t = x * t_scale_;
            double c = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                       0.5 * std::log(nu * M_PI);
            return c + std::log(t_scale_) - (nu + 1.0) / 2.0 * std::log1p(t * t / nu);
        }
        return -0.5 * std::log(2.0 * M_PI) - 0.5 * x * x;
    }
    double base_cdf(double x) const {
        if (family_has_shape(family_)) {
            boost::math::students_t dist(shape_);
            return boost::math::cdf(dist, x * t_scale_);
        }
        boost::math::normal dist;
        return boost::math::cdf(dist, x);
    }

    InnovationFamily family_;
    double skew_, shape_;
    double m1_ = 0.0, t_scale_ = 1.0, mean_ = 0.0, sd_ = 1.0;
};

struct ArmaGarchOrders {
    int ar = 0;         // P
    int ma = 0;         // Q
    int garch_sig = 0;  // lags of sigma^2
    int garch_eps = 0;  // lags of eps^2

    int param_count(InnovationFamily f) const {
        return 1 + ar + ma + 1 + garch_sig + garch_eps + (family_has_skew(f) ? 1 : 0) +
               (family_has_shape(f) ? 1 : 0);
    }
};

/// Conditional mean/variance model
///   z_t = mu + sum a_i z_{t-i} + eps_t + sum b_j eps_{t-j}
///   sigma_t^2 = omega + sum alpha_i sigma_{t-i}^2 + sum beta_j eps_{t-j}^2
/// with standardized innovations eps_t = sigma_t Z_t, Z ~ Innovation.
struct ArmaGarchModel {
    ArmaGarchOrders orders;
    double mu = 0.0;
    Eigen::VectorXd ar, ma;       // a_1..a_P, b_1..b_Q
    double omega = 1.0;
    Eigen::VectorXd alpha, beta;  // sigma^2 lags, eps^2 lags
    InnovationFamily family = InnovationFamily::Normal;
    double skew = 1.0;
    double shape = 10.0;
    double loglik = 0.0;
    double aic = 0.0;
    bool converged = false;
    Eigen::Index window = 0;

    Innovation innovation() const { return Innovation(family, skew, shape); }

    double persistence() const { return alpha.sum() + beta.sum(); }
};

struct GarchFilter {
    Eigen::VectorXd eps;     // model residuals
    Eigen::VectorXd sigma2;  // conditional variances
};

/// Run the ARMA-GARCH recursions over a series. Pre-sample residuals are 0,
/// missing mean lags use the sample mean, sigma_0^2 is the sample variance.
inline GarchFilter garch_filter(const ArmaGarchModel& m, const Eigen::VectorXd& z) {
    const Eigen::Index n = z.size();
    GarchFilter f;
    f.eps.resize(n);
    f.sigma2.resize(n);
    double zbar = z.mean();
    double var0 = n > 1 ? (z.array() - zbar).square().sum() / double(n - 1) : 1.0;
    var0 = std::max(var0, 1e-12);
    for (Eigen::Index t = 0; t < n; ++t) {
        double mean = m.mu;
        for (int i = 0; i < m.orders.ar; ++i)
            mean += m.ar[i] * (t - 1 - i >= 0 ? z[t - 1 - i] : zbar);
        for (int j = 0; j < m.orders.ma; ++j)
            mean += m.ma[j] * (t - 1 - j >= 0 ? f.eps[t - 1 - j] : 0.0);
        f.eps[t] = z[t] - mean;
        double s2 = m.omega;
        for (int i = 0; i < m.orders.garch_sig; ++i)
            s2 += m.alpha[i] * (t - 1 - i >= 0 ? f.sigma2[t - 1 - i] : var0);
        for (int j = 0; j < m.orders.garch_eps; ++j) {
            double e = t - 1 - j >= 0 ? f.eps[t - 1 - j] : 0.0;
            s2 += m.beta[j] * e * e;
        }
        f.sigma2[t] = std::max(s2, 1e-12);
    }
    return f;
}

inline double garch_loglik(const ArmaGarchModel& m, const Eigen::VectorXd& z) {
    GarchFilter f = garch_filter(m, z);
    Innovation inn = m.innovation();
    double ll = 0.0;
    for (Eigen::Index t = 0; t < z.size(); ++t) {
        double sig = std::sqrt(f.sigma2[t]);
        ll += inn.log_pdf(f.eps[t] / sig) - std::log(sig);
    }
    return ll;
}

namespace detail {

// Unconstrained parameter packing: mu, ar..., ma..., log(omega),
// log(alpha...), log(beta...), [log skew], [log(shape-2)].
inline Eigen::VectorXd pack(const ArmaGarchModel& m) {
    const auto& o = m.orders;
    int n = o.param_count(m.family);
    Eigen::VectorXd th(n);
    int k = 0;
    th[k++] = m.mu;
    for (int i = 0; i < o.ar; ++i) th[k++] = m.ar[i];
    for (int i = 0; i < o.ma; ++i) th[k++] = m.ma[i];
    th[k++] = std::log(m.omega);
    for (int i = 0; i < o.garch_sig; ++i) th[k++] = std::log(std::max(m.alpha[i], 1e-8));
    for (int i = 0; i < o.garch_eps; ++i) th[k++] = std::log(std::max(m.beta[i], 1e-8));
    if (family_has_skew(m.family)) th[k++] = std::log(m.skew);
    if (family_has_shape(m.family)) th[k++] = std::log(m.shape - 2.0);
    return th;
}

inline ArmaGarchModel unpack(const Eigen::VectorXd& th, const ArmaGarchOrders& o,
                             InnovationFamily family) {
    ArmaGarchModel m;
    m.orders = o;
    m.family = family;
    m.ar.resize(o.ar);
    m.ma.resize(o.ma);
    m.alpha.resize(o.garch_sig);
    m.beta.resize(o.garch_eps);
    int k = 0;
    m.mu = th[k++];
    for (int i = 0; i < o.ar; ++i) m.ar[i] = th[k++];
    for (int i = 0; i < o.ma; ++i) m.ma[i] = th[k++];
    m.omega = std::exp(std::min(th[k++], 50.0));
    for (int i = 0; i < o.garch_sig; ++i) m.alpha[i] = std::exp(std::min(th[k++], 30.0));
    for (int i = 0; i < o.garch_eps; ++i) m.beta[i] = std::exp(std::min(th[k++], 30.0));
    if (family_has_skew(family)) m.skew = std::exp(std::clamp(th[k++], -3.0, 3.0));
    if (family_has_shape(family)) m.shape = 2.0 + std::exp(std::clamp(th[k++], -6.0, 8.0));
    // covariance stationarity: rescale inside the feasible set if violated
    double s = m.persistence();
    const double cap = 1.0 - 1e-6;
    if (s > cap) {
        m.alpha *= cap / s;
        m.beta *= cap / s;
    }
    return m;
}

}  // namespace detail

/// Quasi-maximum-likelihood fit on the last `window` observations (whole
/// series if window <= 0). Simplex search with a stationarity penalty,
/// polished by numerical-gradient BFGS.
inline ArmaGarchModel fit_arma_garch(const Eigen::VectorXd& series, const ArmaGarchOrders& orders,
                                     InnovationFamily family, Eigen::Index window = 250,
                                     const ArmaGarchModel* warm = nullptr) {
    Eigen::Index n = series.size();
    if (window > 0 && n < window)
        throw std::invalid_argument("fit_arma_garch: series shorter than window");
    Eigen::VectorXd z = window > 0 ? series.tail(window).eval() : series;
    n = z.size();
    if (n < 10) throw std::invalid_argument("fit_arma_garch: too few observations");

    double zbar = z.mean();
    double var = std::max((z.array() - zbar).square().sum() / double(n - 1), 1e-12);

    ArmaGarchModel init;
    init.orders = orders;
    init.family = family;
    init.mu = zbar;
    init.ar = Eigen::VectorXd::Constant(orders.ar, 0.05);
    init.ma = Eigen::VectorXd::Constant(orders.ma, 0.05);
    bool has_garch = orders.garch_sig + orders.garch_eps > 0;
    init.alpha = Eigen::VectorXd::Constant(orders.garch_sig, 0.5 / std::max(orders.garch_sig, 1));
    init.beta = Eigen::VectorXd::Constant(orders.garch_eps, 0.2 / std::max(orders.garch_eps, 1));
    init.omega = has_garch ? var * std::max(1.0 - init.persistence(), 0.05) : var;
    init.skew = 1.0;
    init.shape = 8.0;
    if (warm && warm->orders.ar == orders.ar && warm->orders.ma == orders.ma &&
        warm->orders.garch_sig == orders.garch_sig && warm->orders.garch_eps == orders.garch_eps &&
        warm->family == family)
        init = *warm;

    const double stat_cap = 1.0 - 1e-6;
    auto objective = [&](const Eigen::VectorXd& th) {
        ArmaGarchModel m = detail::unpack(th, orders, family);
        double ll = garch_loglik(m, z);
        if (!std::isfinite(ll)) return 1e12;
        // raw-parameter penalty keeps the search away from the boundary
        double raw_sum = 0.0;
        int k = 1 + orders.ar + orders.ma + 1;
        for (int i = 0; i < orders.garch_sig + orders.garch_eps; ++i)
            raw_sum += std::exp(std::min(th[k + i], 30.0));
        double pen = raw_sum > stat_cap ? 1e4 * (raw_sum - stat_cap) * (raw_sum - stat_cap) : 0.0;
        for (int i = 0; i < orders.ar; ++i) pen += th[1 + i] * th[1 + i] > 4.0 ? 1e3 : 0.0;
        return -ll / double(n) + pen;
    };

    Eigen::VectorXd th0 = detail::pack(init);
    OptimResult nm = warm ? OptimResult{th0, objective(th0), 1}
                          : nelder_mead(objective, th0, 0.25, 4000, 1e-12);
    if (!warm && !std::isfinite(nm.value)) nm.x = th0;
    OptimResult polished = bfgs_numeric(objective, nm.x, 300, 1e-6);
    const Eigen::VectorXd& best = polished.value <= nm.value ? polished.x : nm.x;

    ArmaGarchModel fitted = detail::unpack(best, orders, family);
    fitted.window = n;
    fitted.loglik = garch_loglik(fitted, z);
    fitted.aic = 2.0 * orders.param_count(family) - 2.0 * fitted.loglik;
    double gnorm = numeric_gradient(objective, best).norm();
    fitted.converged = std::isfinite(fitted.loglik) && gnorm <= 1e-4;
    return fitted;
}

struct GarchGridOptions {
    int max_ar = 5, max_ma = 5, max_garch_sig = 2, max_garch_eps = 2;
    std::vector<InnovationFamily> families{InnovationFamily::Normal, InnovationFamily::SkewNormal,
                                           InnovationFamily::Student,
                                           InnovationFamily::SkewStudent};
    Eigen::Index window = 250;
    bool require_convergence = true;
};

/// Minimum-AIC model over the order/family grid; AIC ties break to the model
/// with fewer parameters.
inline ArmaGarchModel select_arma_garch(const Eigen::VectorXd& series,
                                        const GarchGridOptions& opt = {}) {
    if (series.size() < opt.window)
        throw std::invalid_argument("select_arma_garch: need >= window observations");
    ArmaGarchModel best;
    bool found = false;
    for (int P = 0; P <= opt.max_ar; ++P)
        for (int Q = 0; Q <= opt.max_ma; ++Q)
            for (int gp = 0; gp <= opt.max_garch_sig; ++gp)
                for (int gq = 0; gq <= opt.max_garch_eps; ++gq)
                    for (auto fam : opt.families) {
                        ArmaGarchOrders o{P, Q, gp, gq};
                        ArmaGarchModel m;
                        try {
                            m = fit_arma_garch(series, o, fam, opt.window);
                        } catch (const std::exception&) {
                            continue;
                        }
                        if (opt.require_convergence && !m.converged) continue;
                        if (!std::isfinite(m.aic)) continue;
                        int np = o.param_count(fam);
                        int bp = best.orders.param_count(best.family);
                        if (!found || m.aic < best.aic - 1e-9 ||
                            (std::abs(m.aic - best.aic) <= 1e-9 && np < bp)) {
                            best = m;
                            found = true;
                        }
                    }
    if (!found) throw std::runtime_error("select_arma_garch: all fits failed");
    return best;
}

struct Forecast {
    double mean = 0.0;   // one-step conditional mean
    double sigma = 0.0;  // one-step conditional volatility
};

inline Forecast forecast_one_step(const ArmaGarchModel& m, const Eigen::VectorXd& history) {
    Eigen::Index need = std::max({m.orders.ar, m.orders.ma, m.orders.garch_sig,
                                  m.orders.garch_eps, 1});
    if (history.size() < need) throw std::invalid_argument("forecast_one_step: too few lags");
    GarchFilter f = garch_filter(m, history);
    const Eigen::Index t = history.size();
    Forecast fc;
    fc.mean = m.mu;
    for (int i = 0; i < m.orders.ar; ++i) fc.mean += m.ar[i] * history[t - 1 - i];
    for (int j = 0; j < m.orders.ma; ++j) fc.mean += m.ma[j] * f.eps[t - 1 - j];
    double s2 = m.omega;
    for (int i = 0; i < m.orders.garch_sig; ++i) s2 += m.alpha[i] * f.sigma2[t - 1 - i];
    for (int j = 0; j < m.orders.garch_eps; ++j)
        s2 += m.beta[j] * f.eps[t - 1 - j] * f.eps[t - 1 - j];
    fc.sigma = std::sqrt(std::max(s2, 0.0));
    return fc;
}

/// P(next value <= 0) = F(-mean/sigma) under the fitted innovation law.
inline double exceedance_probability(const ArmaGarchModel& m, double mean_fc, double sigma_fc) {
    if (!(sigma_fc > 0.0)) throw std::invalid_argument("exceedance_probability: sigma <= 0");
    return m.innovation().cdf(-mean_fc / sigma_fc);
}

/// Simulate a path of length n (after `burn` discarded observations).
inline Eigen::VectorXd simulate_arma_garch(const ArmaGarchModel& m, Eigen::Index n,
                                           std::uint64_t seed, Eigen::Index burn = 500) {
    std::mt19937_64 rng(seed);
    Innovation inn = m.innovation();
    const Eigen::Index total = n + burn;
    std::vector<double> z(total, 0.0), eps(total, 0.0), sig2(total, 0.0);
    double uncond = m.omega / std::max(1.0 - m.persistence(), 1e-6);
    for (Eigen::Index t = 0; t < total; ++t) {
        double s2 = m.omega;
        for (int i = 0; i < m.orders.garch_sig; ++i)
            s2 += m.alpha[i] * (t - 1 - i >= 0 ? sig2[t - 1 - i] : uncond);
        for (int j = 0; j < m.orders.garch_eps; ++j) {
            double e = t - 1 - j >= 0 ? eps[t - 1 - j] : 0.0;
            s2 += m.beta[j] * e * e;
        }
        sig2[t] = std::max(s2, 1e-12);
        eps[t] = std::sqrt(sig2[t]) * inn.sample(rng);
        double mean = m.mu;
        for (int i = 0; i < m.orders.ar; ++i)
            mean += m.ar[i] * (t - 1 - i >= 0 ? z[t - 1 - i] : m.mu);
        for (int j = 0; j < m.orders.ma; ++j) mean += m.ma[j] * (t - 1 - j >= 0 ? eps[t - 1 - j] : 0.0);
        z[t] = mean + eps[t];
    }
    return Eigen::Map<Eigen::VectorXd>(z.data() + burn, n);
}

}  // namespace lfp
