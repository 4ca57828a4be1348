#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lfp/allocation.hpp"
#include "lfp/autoencoder.hpp"
#include "lfp/backtest.hpp"
#include "lfp/clustering.hpp"
#include "lfp/garch.hpp"
#include "lfp/hedge.hpp"
#include "lfp/nmf.hpp"
#include "lfp/panel.hpp"

namespace lfp {

inline const std::vector<std::string>& strategy_names() {
    static const std::vector<std::string> names{"equal", "equal_class", "markowitz", "erc",
                                               "ivp",   "hrp",         "hcaa",      "kmaa",
                                               "aerp",  "aercw",       "aeaa",      "nmfrp",
                                               "nmfrcw", "nmfaa"};
    return names;
}

inline bool strategy_uses_autoencoder(const std::string& s) {
    return s == "aerp" || s == "aercw" || s == "aeaa";
}

inline bool strategy_uses_nmf(const std::string& s) {
    return s == "nmfrp" || s == "nmfrcw" || s == "nmfaa";
}

struct EngineConfig {
    int p = 4;
    TrainConfig train;
    BacktestConfig backtest;
    Date test_start{};
    std::uint64_t seed = 0;
    int jobs = 1;
    int nmf_max_iter = 500;
    double nmf_tol = 1e-6;
    /// When set, overrides the named strategy's weight rule; receives the
    /// 0-based rebalance index and the trailing covariance estimate.
    std::function<AllocationWeights(int, const CovarianceEstimate&)> custom_strategy;
};

struct HedgeConfig {
    GarchGridOptions grid = []() {
        GarchGridOptions g;
        // rolling daily refits make the full order grid disproportionate;
        // keep the monthly re-selection light by default
        g.max_ar = 1;
        g.max_ma = 1;
        g.max_garch_sig = 1;
        g.max_garch_eps = 1;
        return g;
    }();
    double reduction = 1.0;  // fraction of a signaled cluster moved to cash
    bool refit_daily = true;
    std::optional<double> threshold_override;  // bypass calibration (e.g. >1 disables signals)
};

struct MonthRecord {
    Date rebalance_date{};
    Eigen::VectorXd target_weights;  // normalized allocation a (sums to 1)
    double leverage = 1.0;
    double cost = 0.0;
    double turnover = 0.0;  // sum |a_tilde_new - a_tilde_drifted|
    bool failed = false;
};

struct BacktestReport {
    std::string strategy;
    std::vector<Date> dates;
    Eigen::VectorXd returns;   // net daily strategy returns
    Eigen::VectorXd leverage;  // leverage in effect each day
    std::vector<Eigen::VectorXd> daily_weights;  // levered, drifted
    std::vector<MonthRecord> months;
    std::map<std::string, double> metrics;
    Eigen::VectorXd r2;          // per-asset reconstruction R^2 (factor strategies)
    Eigen::MatrixXd factor_corr; // d x p input-factor Pearson correlations
    std::vector<std::string> log;
};

struct FactorDiagnostics {
    Eigen::MatrixXd probs;                 // test-day exceedance probabilities, T x p
    Eigen::Matrix<int, -1, -1> signals;    // predicted classes
    Eigen::Matrix<int, -1, -1> realized;   // observed classes
    std::vector<double> thresholds;        // last calibrated u per factor
    std::vector<ClassifierValidation> validation;
};

struct HedgeRunReport {
    BacktestReport unhedged;
    BacktestReport hedged;
    FactorDiagnostics diagnostics;
};

namespace detail {

inline void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    for (int w = 0; w < jobs; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Train the seed ensemble with up to `jobs` members in flight; results are
/// ordered by seed so parallelism cannot change downstream averages.
inline std::vector<std::pair<AutoencoderModel, TrainReport>> train_ensemble_parallel(
    const Eigen::MatrixXd& train_data, const Eigen::MatrixXd& validation, int p,
    const TrainConfig& cfg, std::uint64_t seed0, int jobs, int nmf_max_iter = 500) {
    std::vector<std::pair<AutoencoderModel, TrainReport>> out(cfg.n_seeds);
    parallel_for(cfg.n_seeds, jobs, [&](int s) {
        std::uint64_t seed = seed0 + std::uint64_t(s);
        auto warm = fit_convex_nmf(train_data, p, nmf_max_iter, 1e-6, seed);
        out[s] = train(train_data, validation, cfg, warm, seed);
    });
    return out;
}

struct MonthModels {
    std::vector<std::pair<AutoencoderModel, TrainReport>> ensemble;  // AE strategies / hedging
    std::optional<ConvexNmfModel> nmf;
    Normalizer normalizer;
};

inline AllocationWeights factor_strategy_weights(const std::string& name,
                                                 const Eigen::MatrixXd& sigma,
                                                 const MonthModels& models) {
    auto one = [&](const ClusterAssignment& asg, const Eigen::MatrixXd& loadings) {
        if (name == "aerp" || name == "nmfrp") return aerp_weights(sigma, asg);
        if (name == "aercw" || name == "nmfrcw") return aercw_weights(sigma, asg, loadings);
        return aeaa_weights(asg);
    };
    if (strategy_uses_nmf(name)) {
        ConvexNmfModel norm = unit_normalize_loadings(*models.nmf);
        auto asg = assign_clusters(norm.W, kAssignmentEpsilon, ClusterSource::Nmf);
        return one(asg, norm.W);
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(sigma.rows());
    std::string label;
    for (const auto& [model, report] : models.ensemble) {
        auto asg = assign_clusters(model.W, kAssignmentEpsilon, ClusterSource::Autoencoder);
        AllocationWeights w = one(asg, model.W);
        label = w.strategy;
        acc += w.a;
    }
    acc /= acc.sum();
    return AllocationWeights{acc, label};
}

inline int best_ensemble_member(const std::vector<std::pair<AutoencoderModel, TrainReport>>& e) {
    int best = 0;
    for (int i = 1; i < int(e.size()); ++i) {
        const auto& r = e[i].second;
        const auto& b = e[best].second;
        if (r.val_loss[r.stopping_epoch] < b.val_loss[b.stopping_epoch]) best = i;
    }
    return best;
}

/// One-step-ahead exceedance probabilities over series positions
/// [start, series.size()): each forecast sees only data before its position.
inline Eigen::VectorXd rolling_probs(const ArmaGarchModel& m, const Eigen::VectorXd& series,
                                     Eigen::Index start) {
    Eigen::VectorXd p(series.size() - start);
    for (Eigen::Index t = start; t < series.size(); ++t) {
        Forecast fc = forecast_one_step(m, series.head(t));
        p[t - start] = exceedance_probability(m, fc.mean, std::max(fc.sigma, 1e-10));
    }
    return p;
}

}  // namespace detail

/// Per-factor tail classifier state carried through a test month.
struct FactorHedgeState {
    ArmaGarchModel model;
    double threshold = 0.5;
    Eigen::VectorXd history;  // linear activation history the model has seen
};

/// Rolling monthly backtest: expanding retrain with the previous calendar
/// month as validation, covariance from the trailing estimation window,
/// vol-targeted leverage, proportional costs on rebalance turnover, and
/// buy-and-hold weight drift within each month. When `hedge` is given, a
/// second hedged accounting path runs in lockstep off ARMA-GARCH signals on
/// the linear activations; with no signals it reproduces the unhedged NAV
/// bit for bit.
inline HedgeRunReport run_backtest(const ReturnsPanel& panel, const std::string& strategy,
                                   const EngineConfig& cfg,
                                   const HedgeConfig* hedge = nullptr) {
    const Eigen::Index d = panel.cols();
    const bool needs_models = strategy_uses_autoencoder(strategy) || strategy_uses_nmf(strategy);
    const bool do_hedge = hedge != nullptr;
    {
        const auto& names = strategy_names();
        if (std::find(names.begin(), names.end(), strategy) == names.end())
            throw std::invalid_argument("run_backtest: unknown strategy " + strategy);
    }
    Eigen::Index test_begin = panel.lower_bound(cfg.test_start);
    if (test_begin < std::max<Eigen::Index>(cfg.backtest.estimation_window, 2))
        throw std::invalid_argument("run_backtest: insufficient history before test_start");
    if (test_begin >= panel.rows())
        throw std::invalid_argument("run_backtest: test_start beyond panel");

    HedgeRunReport out;
    out.unhedged.strategy = strategy;
    out.hedged.strategy = strategy + "_hedged";

    std::vector<double> returns_u, returns_h, leverage_u, leverage_h;
    std::vector<Eigen::VectorXd> weights_u, weights_h;
    std::vector<std::vector<double>> prob_rows, signal_rows, realized_rows;

    Eigen::VectorXd atil_u = Eigen::VectorXd::Zero(d);  // levered drifted weights
    Eigen::VectorXd atil_h = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd last_a = equal_weights(d).a;  // fallback on strategy failure
    std::vector<std::string> class_labels;
    for (const auto& a : panel.assets()) class_labels.push_back(a.asset_class);

    // factor model artifacts of the most recent month (for diagnostics)
    detail::MonthModels models;
    const AutoencoderModel* diag_model = nullptr;
    std::vector<FactorHedgeState> hedge_state;
    Eigen::MatrixXd zlin_hist;  // rows: past linear activations of diag model

    Eigen::Index month_start = test_begin;
    while (month_start < panel.rows()) {
        Date start_date = panel.dates()[size_t(month_start)];
        Date next_month = add_months_floor(start_date, 1);
        Eigen::Index month_end = panel.lower_bound(next_month);

        // --- retrain ------------------------------------------------------
        models = detail::MonthModels{};
        diag_model = nullptr;
        bool failed = false;
        AllocationWeights alloc{last_a, strategy};
        Eigen::Index est = std::min(cfg.backtest.estimation_window, month_start);
        Eigen::MatrixXd window = panel.values().middleRows(month_start - est, est);
        try {
            CovarianceEstimate cov = estimate_covariance(window);
            int month_index = int(out.unhedged.months.size());
            if (needs_models || do_hedge) {
                Date val_start = shift_month(start_date, -1);
                Eigen::Index vi = panel.lower_bound(val_start);
                if (vi <= 1 || month_start - vi < 2)
                    throw std::runtime_error("validation month too short");
                models.normalizer = fit_normalizer(panel, 0, vi);
                Eigen::MatrixXd xtr = models.normalizer.apply(panel.values().topRows(vi));
                Eigen::MatrixXd xval = models.normalizer.apply(
                    panel.values().middleRows(vi, month_start - vi));
                if (strategy_uses_autoencoder(strategy) || do_hedge)
                    models.ensemble = detail::train_ensemble_parallel(
                        xtr, xval, cfg.p, cfg.train, cfg.seed, cfg.jobs, cfg.nmf_max_iter);
                if (strategy_uses_nmf(strategy))
                    models.nmf = fit_convex_nmf(xtr, cfg.p, cfg.nmf_max_iter, cfg.nmf_tol,
                                                cfg.seed);
            }
            if (cfg.custom_strategy) {
                alloc = cfg.custom_strategy(month_index, cov);
            } else if (needs_models) {
                alloc = detail::factor_strategy_weights(strategy, cov.sigma, models);
            } else if (strategy == "equal") {
                alloc = equal_weights(d);
            } else if (strategy == "equal_class") {
                alloc = equal_class_weights(class_labels);
            } else if (strategy == "markowitz") {
                alloc = markowitz_weights(cov.sigma);
            } else if (strategy == "erc") {
                alloc = erc_weights(cov.sigma);
            } else if (strategy == "ivp") {
                alloc = inverse_variance_weights(cov.sigma);
            } else if (strategy == "hrp") {
                alloc = hrp_weights(cov.sigma, cov.corr);
            } else if (strategy == "hcaa") {
                alloc = hcaa_weights(cov.corr);
            } else if (strategy == "kmaa") {
                Normalizer norm = fit_normalizer(panel, 0, month_start);
                Eigen::MatrixXd xtr = norm.apply(panel.values().topRows(month_start));
                alloc = kmaa_weights(xtr, cfg.p, cfg.seed);
            }
            alloc.check();
            last_a = alloc.a;
        } catch (const std::exception& e) {
            failed = true;
            out.unhedged.log.push_back(start_date.iso() + " " + strategy +
                                       ": rebalance failed, holding weights (" + e.what() + ")");
        }

        // --- hedging models for this month --------------------------------
        const ClusterAssignment* hedge_asg = nullptr;
        ClusterAssignment asg_storage;
        if (do_hedge && !failed) {
            int bi = detail::best_ensemble_member(models.ensemble);
            diag_model = &models.ensemble[size_t(bi)].first;
            asg_storage = assign_clusters(diag_model->W, kAssignmentEpsilon,
                                          ClusterSource::Autoencoder);
            hedge_asg = &asg_storage;
            Eigen::MatrixXd xhist = models.normalizer.apply(panel.values().topRows(month_start));
            zlin_hist = linear_activations(*diag_model, xhist).z_lin;

            hedge_state.assign(size_t(cfg.p), {});
            std::vector<std::string> errors(size_t(cfg.p));
            detail::parallel_for(cfg.p, cfg.jobs, [&](int k) {
                Eigen::VectorXd series = zlin_hist.col(k);
                FactorHedgeState st;
                st.history = series;
                st.model = select_arma_garch(series, hedge->grid);
                // calibrate u on the fit window's own one-step forecasts
                Eigen::Index cal_start = series.size() - hedge->grid.window + 1;
                Eigen::VectorXd probs = detail::rolling_probs(st.model, series, cal_start);
                std::vector<int> classes(size_t(probs.size()));
                for (Eigen::Index t = 0; t < probs.size(); ++t)
                    classes[size_t(t)] = series[cal_start + t] <= 0.0 ? 1 : 0;
                st.threshold = hedge->threshold_override
                                   ? *hedge->threshold_override
                                   : calibrate_threshold(probs, classes);
                hedge_state[size_t(k)] = std::move(st);
            });
        } else if (do_hedge) {
            hedge_state.clear();  // failed month: no signals, hedged path mirrors unhedged
        }

        // --- rebalance ----------------------------------------------------
        MonthRecord rec;
        rec.rebalance_date = start_date;
        rec.target_weights = alloc.a;
        rec.failed = failed;
        Eigen::Map<const Eigen::VectorXd> hist_u(returns_u.data(), Eigen::Index(returns_u.size()));
        Eigen::Map<const Eigen::VectorXd> hist_h(returns_h.data(), Eigen::Index(returns_h.size()));
        double lev_u = vol_target_leverage(hist_u, cfg.backtest);
        double lev_h = do_hedge ? vol_target_leverage(hist_h, cfg.backtest) : lev_u;
        rec.leverage = lev_u;

        double cost_u = 0.0, cost_h = 0.0;
        if (!failed) {
            Eigen::VectorXd new_u = lev_u * alloc.a;
            Eigen::VectorXd new_h = lev_h * alloc.a;
            rec.turnover = (new_u - atil_u).cwiseAbs().sum();
            cost_u = cfg.backtest.cost_bps / 1e4 * rec.turnover;
            cost_h = cfg.backtest.cost_bps / 1e4 * (new_h - atil_h).cwiseAbs().sum();
            atil_u = new_u;
            atil_h = new_h;
        }
        rec.cost = cost_u;
        out.unhedged.months.push_back(rec);

        // --- daily loop ---------------------------------------------------
        for (Eigen::Index t = month_start; t < month_end; ++t) {
            Eigen::VectorXd x = panel.values().row(t).transpose();
            double r_u_gross = atil_u.dot(x);
            double r_u = r_u_gross - (t == month_start ? cost_u : 0.0);
            returns_u.push_back(r_u);
            leverage_u.push_back(lev_u);
            weights_u.push_back(atil_u);
            out.unhedged.dates.push_back(panel.dates()[size_t(t)]);
            // drift: position values scale with asset returns, NAV with the
            // gross return (costs are charged to performance, not to drift)
            atil_u = (atil_u.array() * (1.0 + x.array())).matrix() / (1.0 + r_u_gross);

            if (!do_hedge) continue;

            std::vector<int> signals(size_t(cfg.p), 0);
            std::vector<double> probs(size_t(cfg.p), 0.0);
            if (!hedge_state.empty()) {
                for (int k = 0; k < cfg.p; ++k) {
                    auto& st = hedge_state[size_t(k)];
                    Forecast fc = forecast_one_step(st.model, st.history);
                    probs[size_t(k)] =
                        exceedance_probability(st.model, fc.mean, std::max(fc.sigma, 1e-10));
                    signals[size_t(k)] = probs[size_t(k)] >= st.threshold ? 1 : 0;
                }
            }
            Eigen::VectorXd w_day = atil_h;
            Eigen::VectorXd invested_frac = Eigen::VectorXd::Ones(d);
            if (!hedge_state.empty() && hedge_asg) {
                HedgedWeights hw = hedge_weights(
                    atil_h, *hedge_asg, signals, hedge->reduction);
                w_day = hw.a;
                for (Eigen::Index i = 0; i < d; ++i)
                    if (atil_h[i] != 0.0) invested_frac[i] = w_day[i] / atil_h[i];
            }
            double r_h_gross = w_day.dot(x);
            double r_h = r_h_gross - (t == month_start ? cost_h : 0.0);
            returns_h.push_back(r_h);
            leverage_h.push_back(lev_h);
            weights_h.push_back(w_day);
            // hedged drift: the invested part of each position grows with the
            // asset, the part parked in cash keeps its value
            atil_h = (atil_h.array() *
                      (1.0 + invested_frac.array() * x.array())).matrix() / (1.0 + r_h_gross);

            // diagnostics + roll classifier state forward with today's value
            std::vector<double> prow(size_t(cfg.p), 0.0), srow(size_t(cfg.p), 0.0),
                rrow(size_t(cfg.p), 0.0);
            if (!hedge_state.empty() && diag_model) {
                Eigen::VectorXd xz = models.normalizer.apply_row(x);
                Eigen::VectorXd zl = diag_model->H.transpose() * xz + diag_model->b_E;
                for (int k = 0; k < cfg.p; ++k) {
                    auto& st = hedge_state[size_t(k)];
                    Eigen::VectorXd grown(st.history.size() + 1);
                    grown << st.history, zl[k];
                    st.history = std::move(grown);
                    if (hedge->refit_daily) {
                        try {
                            st.model = fit_arma_garch(st.history, st.model.orders,
                                                      st.model.family, hedge->grid.window,
                                                      &st.model);
                        } catch (const std::exception&) {
                            // keep yesterday's parameters
                        }
                    }
                    prow[size_t(k)] = probs[size_t(k)];
                    srow[size_t(k)] = signals[size_t(k)];
                    rrow[size_t(k)] = zl[k] <= 0.0 ? 1.0 : 0.0;
                }
            }
            prob_rows.push_back(prow);
            signal_rows.push_back(srow);
            realized_rows.push_back(rrow);
        }
        if (do_hedge) {
            MonthRecord hrec = rec;
            hrec.leverage = lev_h;
            hrec.cost = cost_h;
            out.hedged.months.push_back(hrec);
        }
        month_start = month_end;
    }

    auto finalize = [&](BacktestReport& rep, std::vector<double>& rets,
                        std::vector<double>& levs, std::vector<Eigen::VectorXd>& w) {
        rep.returns = Eigen::Map<Eigen::VectorXd>(rets.data(), Eigen::Index(rets.size()));
        rep.leverage = Eigen::Map<Eigen::VectorXd>(levs.data(), Eigen::Index(levs.size()));
        rep.daily_weights = std::move(w);
        std::vector<Eigen::VectorXd> rebal_w;
        double turn = 0.0;
        for (const auto& m : rep.months) {
            rebal_w.push_back(m.leverage * m.target_weights);
            turn += m.turnover;
        }
        rep.metrics = compute_metrics(rep.returns, rebal_w, cfg.backtest.risk_free,
                                      cfg.backtest.risk_aversion, cfg.backtest.alpha);
        rep.metrics["TTO"] = rep.months.empty() ? 0.0 : turn / double(rep.months.size());
    };
    finalize(out.unhedged, returns_u, leverage_u, weights_u);
    if (do_hedge) {
        out.hedged.dates = out.unhedged.dates;
        out.hedged.log = out.unhedged.log;
        finalize(out.hedged, returns_h, leverage_h, weights_h);

        const Eigen::Index nt = Eigen::Index(prob_rows.size());
        out.diagnostics.probs.resize(nt, cfg.p);
        out.diagnostics.signals.resize(nt, cfg.p);
        out.diagnostics.realized.resize(nt, cfg.p);
        for (Eigen::Index t = 0; t < nt; ++t)
            for (int k = 0; k < cfg.p; ++k) {
                out.diagnostics.probs(t, k) = prob_rows[size_t(t)][size_t(k)];
                out.diagnostics.signals(t, k) = int(signal_rows[size_t(t)][size_t(k)]);
                out.diagnostics.realized(t, k) = int(realized_rows[size_t(t)][size_t(k)]);
            }
        for (int k = 0; k < cfg.p; ++k) {
            out.diagnostics.thresholds.push_back(
                hedge_state.empty() ? 0.5 : hedge_state[size_t(k)].threshold);
            std::vector<int> classes;
            classes.resize(size_t(nt));
            for (Eigen::Index t = 0; t < nt; ++t) classes[size_t(t)] = out.diagnostics.realized(t, k);
            if (nt > 0)
                out.diagnostics.validation.push_back(validate_classifier(
                    out.diagnostics.probs.col(k), classes, out.diagnostics.thresholds.back()));
        }
    }

    // reconstruction diagnostics off the last trained factor model
    if (needs_models && !out.unhedged.dates.empty()) {
        Eigen::Index t0 = panel.lower_bound(out.unhedged.dates.front());
        Eigen::MatrixXd xtest =
            models.normalizer.mu.size() > 0
                ? models.normalizer.apply(panel.values().bottomRows(panel.rows() - t0))
                : Eigen::MatrixXd();
        if (xtest.rows() >= 2) {
            Eigen::MatrixXd xhat, factors;
            if (strategy_uses_nmf(strategy) && models.nmf) {
                xhat = reconstruct(*models.nmf, xtest);
                factors = xtest * models.nmf->H;
            } else if (!models.ensemble.empty()) {
                const auto& m = models.ensemble[size_t(
                    detail::best_ensemble_member(models.ensemble))].first;
                xhat = reconstruct(m, xtest);
                factors = encode_matrix(m, xtest);
            }
            if (xhat.rows() == xtest.rows()) {
                out.unhedged.r2.resize(d);
                for (Eigen::Index i = 0; i < d; ++i)
                    out.unhedged.r2[i] = r_squared(xtest.col(i), xhat.col(i));
                try {
                    out.unhedged.factor_corr = input_factor_correlation(xtest, factors);
                } catch (const std::exception&) {
                    // constant factor column: leave empty
                }
            }
        }
    }
    return out;
}

}  // namespace lfp
