#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lfp/engine.hpp"

using namespace lfp;

namespace {

EngineConfig flat_engine(Date test_start) {
    EngineConfig cfg;
    cfg.test_start = test_start;
    cfg.backtest.cost_bps = 0.0;
    cfg.backtest.vol_target = 1e6;  // leverage always capped ...
    cfg.backtest.max_leverage = 1.0;  // ... at exactly 1
    cfg.backtest.estimation_window = 60;
    return cfg;
}

}  // namespace

TEST_CASE("normal quantile and cdf oracles") {
    CHECK(detail::normal_cdf(0.0) == Catch::Approx(0.5));
    CHECK(detail::normal_cdf(1.6449) == Catch::Approx(0.95).margin(1e-4));
    CHECK(detail::normal_quantile(0.975) == Catch::Approx(1.959964).margin(1e-6));
    CHECK(detail::normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-12));
    for (double p : {0.01, 0.2, 0.77, 0.999})
        CHECK(detail::normal_cdf(detail::normal_quantile(p)) == Catch::Approx(p).margin(1e-12));
    CHECK_THROWS_AS(detail::normal_quantile(0.0), std::invalid_argument);
}

TEST_CASE("empirical quantile uses linear interpolation") {
    std::vector<double> v{4.0, 1.0, 3.0, 2.0};
    CHECK(detail::quantile(v, 0.0) == 1.0);
    CHECK(detail::quantile(v, 1.0) == 4.0);
    CHECK(detail::quantile(v, 0.5) == Catch::Approx(2.5));
    CHECK(detail::quantile(v, 1.0 / 3.0) == Catch::Approx(2.0));
}

TEST_CASE("vol target leverage rule") {
    BacktestConfig cfg;  // 5% target, lookbacks 20/60, cap 3
    std::mt19937_64 rng(3);
    // constant-magnitude alternating returns give a known sample std
    auto series = [&](double daily_vol, Eigen::Index n) {
        Eigen::VectorXd r(n);
        std::normal_distribution<double> g(0.0, daily_vol);
        for (Eigen::Index i = 0; i < n; ++i) r[i] = g(rng);
        return r;
    };
    // warm-up: under 60 observations -> leverage 1
    CHECK(vol_target_leverage(series(0.01, 59), cfg) == 1.0);

    Eigen::VectorXd r = series(0.02, 500);
    double s20 = lfp::detail::sample_std(r.tail(20)) * std::sqrt(252.0);
    double s60 = lfp::detail::sample_std(r.tail(60)) * std::sqrt(252.0);
    CHECK(vol_target_leverage(r, cfg) ==
          Catch::Approx(std::min(0.05 / std::max(s20, s60), 3.0)));

    // zero-vol history -> capped at max leverage
    Eigen::VectorXd flat = Eigen::VectorXd::Zero(100);
    CHECK(vol_target_leverage(flat, cfg) == 3.0);
}

TEST_CASE("probabilistic sharpe ratio and min track record oracles") {
    CHECK(probabilistic_sharpe_ratio(0.0, 100, 0.0, 3.0) == Catch::Approx(0.5));
    // PSR(0.1, 101, 0, 3) = Phi(0.1 * 10 / sqrt(1.005))
    double expect = lfp::detail::normal_cdf(0.1 * 10.0 / std::sqrt(1.005));
    CHECK(probabilistic_sharpe_ratio(0.1, 101, 0.0, 3.0) == Catch::Approx(expect).margin(5e-4));
    CHECK(expect == Catch::Approx(0.8406).margin(5e-4));

    double mtrl = min_track_record_length(0.1, 0.0, 3.0, 0.05);
    CHECK(mtrl == Catch::Approx(272.9).margin(0.5));
    CHECK(std::isinf(min_track_record_length(0.0, 0.0, 3.0)));
    // monotone in SR
    CHECK(probabilistic_sharpe_ratio(0.2, 101, 0.0, 3.0) >
          probabilistic_sharpe_ratio(0.1, 101, 0.0, 3.0));
}

TEST_CASE("compute_metrics on a known series") {
    Eigen::VectorXd r(4);
    r << 0.01, -0.02, 0.03, 0.0;
    std::vector<Eigen::VectorXd> weights{Eigen::VectorXd::Constant(4, 0.25),
                                         Eigen::VectorXd::Constant(4, 0.25)};
    auto m = compute_metrics(r, weights, 0.0, 2.0, 0.25);
    CHECK(m.at("mean") == Catch::Approx(0.005));
    double sd = lfp::detail::sample_std(r);
    CHECK(m.at("vol") == Catch::Approx(sd));
    CHECK(m.at("SR") == Catch::Approx(0.005 / sd));
    CHECK(m.at("CEQ") == Catch::Approx(0.005 - 1.0 * sd * sd));  // gamma/2 = 1
    CHECK(m.at("TTO") == Catch::Approx(0.0));
    CHECK(m.at("SSPW") == Catch::Approx(4 * 0.25 * 0.25));
    CHECK(m.at("ES") <= m.at("VaR"));
    CHECK(m.at("PSR") > 0.0);
    CHECK(m.at("PSR") < 1.0);
    // NAV: 1.01 * 0.98 * 1.03 * 1.0
    CHECK(m.at("total_return") == Catch::Approx(1.01 * 0.98 * 1.03 - 1.0));
}

TEST_CASE("max drawdown oracle") {
    Eigen::VectorXd r(4);
    r << 0.10, -0.50, 1.0, -0.10;  // NAV: 1.1, 0.55, 1.1, 0.99
    auto m = compute_metrics(r, {}, 0.0, 1.0, 0.05);
    CHECK(m.at("MDD") == Catch::Approx(0.5));
}

TEST_CASE("r_squared oracles") {
    Eigen::VectorXd x(4);
    x << -2, -1, 1, 2;  // zero mean
    CHECK(r_squared(x, x) == Catch::Approx(1.0));
    CHECK(r_squared(x, Eigen::VectorXd::Zero(4)) == Catch::Approx(0.0));
    CHECK(r_squared(x, (-x).eval()) == Catch::Approx(-3.0));
    CHECK_THROWS_AS(r_squared(Eigen::VectorXd::Ones(4), x), std::invalid_argument);
}

TEST_CASE("pearson and input-factor correlations") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd a(10000), b(10000);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a[i] = g(rng);
        b[i] = g(rng);
    }
    CHECK(pearson(a, a) == Catch::Approx(1.0));
    CHECK(pearson(a, (-a).eval()) == Catch::Approx(-1.0));
    CHECK(std::abs(pearson(a, b)) < 0.05);

    Eigen::MatrixXd inputs(10000, 2), factors(10000, 1);
    inputs.col(0) = a;
    inputs.col(1) = b;
    factors.col(0) = a;
    auto r = input_factor_correlation(inputs, factors);
    CHECK(r(0, 0) == Catch::Approx(1.0));
    CHECK(std::abs(r(1, 0)) < 0.05);
}

TEST_CASE("zero-cost unit-leverage backtest matches direct compounding") {
    auto planted = lfp::test::make_planted(520, 5, 2, 31);
    auto panel = lfp::test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    Date test_start = panel.dates()[260];
    auto cfg = flat_engine(test_start);
    auto run = run_backtest(panel, "equal", cfg);

    // oracle: per rebalance month, buy-and-hold of the target weights
    double nav = 1.0;
    size_t day = 0;
    Eigen::Index t0 = panel.lower_bound(test_start);
    for (const auto& month : run.unhedged.months) {
        Eigen::Index begin = panel.lower_bound(month.rebalance_date);
        Eigen::Index end = panel.lower_bound(add_months_floor(month.rebalance_date, 1));
        end = std::min(end, panel.rows());
        Eigen::VectorXd growth = Eigen::VectorXd::Ones(panel.cols());
        for (Eigen::Index t = begin; t < end; ++t, ++day)
            growth.array() *= 1.0 + panel.values().row(t).transpose().array();
        nav *= month.target_weights.dot(growth);
        (void)t0;
    }
    double run_nav = 1.0;
    for (Eigen::Index t = 0; t < run.unhedged.returns.size(); ++t)
        run_nav *= 1.0 + run.unhedged.returns[t];
    CHECK(std::abs(run_nav - nav) < 1e-10);
    CHECK(run.unhedged.metrics.at("TTO") >= 0.0);
}

TEST_CASE("full turnover with 2 bps costs 4 bps on the rebalance day") {
    auto planted = lfp::test::make_planted(400, 4, 2, 13);
    // make asset returns zero so drifted weights stay put and the cost term
    // is the only contribution on rebalance days
    Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(400, 4);
    auto panel = lfp::test::panel_from_matrix(zeros, Date(2015, 1, 5));
    Date test_start = panel.dates()[200];
    auto cfg = flat_engine(test_start);
    cfg.backtest.cost_bps = 2.0;
    // alternate all-in positions between two assets: |delta| sums to 2
    cfg.custom_strategy = [](int month, const CovarianceEstimate&) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(4);
        a[month % 2] = 1.0;
        return AllocationWeights{a, "flip"};
    };
    auto run = run_backtest(panel, "equal", cfg);
    REQUIRE(run.unhedged.months.size() >= 3);
    // first rebalance moves 0 -> 1 unit: cost 2 bps
    Eigen::Index first = 0;
    CHECK(run.unhedged.returns[first] == Catch::Approx(-2e-4).margin(1e-15));
    // later rebalances flip the full book: 4 bps
    Eigen::Index second = panel.lower_bound(run.unhedged.months[1].rebalance_date) -
                          panel.lower_bound(run.unhedged.months[0].rebalance_date);
    CHECK(run.unhedged.returns[second] == Catch::Approx(-4e-4).margin(1e-15));
    // non-rebalance days are exactly zero
    CHECK(run.unhedged.returns[1] == 0.0);
}

TEST_CASE("leverage scales returns linearly with costs off") {
    auto planted = lfp::test::make_planted(520, 5, 2, 77);
    auto panel = lfp::test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    Date test_start = panel.dates()[300];

    auto cfg1 = flat_engine(test_start);
    auto base = run_backtest(panel, "equal", cfg1);

    auto cfg2 = flat_engine(test_start);
    cfg2.backtest.vol_target = 1e6;
    cfg2.backtest.max_leverage = 0.5;  // half leverage once past warm-up
    auto half = run_backtest(panel, "equal", cfg2);

    REQUIRE(base.unhedged.returns.size() == half.unhedged.returns.size());
    REQUIRE(base.unhedged.months.size() == half.unhedged.months.size());
    // compare the first day of each month, where the freshly levered weights
    // make the return exactly linear in leverage
    bool saw_half = false;
    Eigen::Index t0 = panel.lower_bound(test_start);
    for (size_t m = 0; m < base.unhedged.months.size(); ++m) {
        Eigen::Index day = panel.lower_bound(base.unhedged.months[m].rebalance_date) - t0;
        double lb = base.unhedged.months[m].leverage;
        double lh = half.unhedged.months[m].leverage;
        if (lh == 0.5) saw_half = true;
        CHECK(half.unhedged.returns[day] ==
              Catch::Approx(lh / lb * base.unhedged.returns[day]).margin(1e-14));
    }
    CHECK(saw_half);
}

TEST_CASE("unknown strategy is rejected") {
    auto planted = lfp::test::make_planted(300, 4, 2, 5);
    auto panel = lfp::test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    EngineConfig cfg = flat_engine(panel.dates()[200]);
    CHECK_THROWS_AS(run_backtest(panel, "nope", cfg), std::invalid_argument);
}

TEST_CASE("strategy failure holds previous weights and logs") {
    auto planted = lfp::test::make_planted(400, 4, 2, 5);
    auto panel = lfp::test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    auto cfg = flat_engine(panel.dates()[250]);
    cfg.custom_strategy = [](int month, const CovarianceEstimate&) {
        if (month >= 1) throw std::runtime_error("synthetic failure");
        return equal_weights(4);
    };
    auto run = run_backtest(panel, "equal", cfg);
    REQUIRE(run.unhedged.months.size() >= 2);
    CHECK_FALSE(run.unhedged.months[0].failed);
    CHECK(run.unhedged.months[1].failed);
    CHECK_FALSE(run.unhedged.log.empty());
}
