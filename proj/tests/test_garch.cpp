#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lfp/garch.hpp"

using namespace lfp;

TEST_CASE("innovation laws are standardized") {
    for (auto fam : {InnovationFamily::Normal, InnovationFamily::SkewNormal,
                     InnovationFamily::Student, InnovationFamily::SkewStudent}) {
        Innovation inn(fam, 0.77, 7.92);
        std::mt19937_64 rng(1);
        double sum = 0.0, sq = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            double z = inn.sample(rng);
            sum += z;
            sq += z * z;
        }
        double mean = sum / n;
        double var = sq / n - mean * mean;
        INFO(family_name(fam));
        CHECK(std::abs(mean) < 0.02);
        CHECK(var == Catch::Approx(1.0).margin(0.05));
    }
}

TEST_CASE("innovation cdf matches sampled frequencies and the pdf") {
    Innovation inn(InnovationFamily::SkewStudent, 0.77, 7.92);
    const int n = 200000;
    for (double q : {-1.0, -0.5, 0.0, 0.8}) {
        int below = 0;
        std::mt19937_64 r2(11);
        for (int i = 0; i < n; ++i)
            if (inn.sample(r2) <= q) ++below;
        CHECK(double(below) / n == Catch::Approx(inn.cdf(q)).margin(0.01));
    }
    // cdf' = pdf by central differences
    for (double z : {-1.3, -0.2, 0.4, 1.7}) {
        double h = 1e-5;
        double fd = (inn.cdf(z + h) - inn.cdf(z - h)) / (2.0 * h);
        CHECK(fd == Catch::Approx(std::exp(inn.log_pdf(z))).epsilon(1e-5));
    }
    // normal case reduces to the standard normal
    Innovation norm(InnovationFamily::Normal);
    CHECK(norm.cdf(0.0) == Catch::Approx(0.5));
    CHECK(norm.cdf(1.6449) == Catch::Approx(0.95).margin(1e-4));
    CHECK_THROWS_AS(Innovation(InnovationFamily::Student, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("garch filter recursion oracle") {
    // sigma_t^2 = omega + alpha sigma_{t-1}^2 + beta eps_{t-1}^2, eps = z - mu
    ArmaGarchModel m;
    m.orders = {0, 0, 1, 1};
    m.mu = 0.0;
    m.omega = 0.1;
    m.alpha = Eigen::VectorXd::Constant(1, 0.2);
    m.beta = Eigen::VectorXd::Constant(1, 0.3);
    Eigen::VectorXd z(3);
    z << 1.0, -2.0, 0.5;
    auto f = garch_filter(m, z);
    double var0 = ((1.0 - z.mean()) * (1.0 - z.mean()) + (-2.0 - z.mean()) * (-2.0 - z.mean()) +
                   (0.5 - z.mean()) * (0.5 - z.mean())) /
                  2.0;
    // pre-sample sigma^2 is the sample variance, pre-sample eps is 0
    CHECK(f.sigma2[0] == Catch::Approx(0.1 + 0.2 * var0));
    CHECK(f.eps[0] == Catch::Approx(1.0));
    CHECK(f.sigma2[1] == Catch::Approx(0.1 + 0.2 * f.sigma2[0] + 0.3 * 1.0));
    CHECK(f.sigma2[2] == Catch::Approx(0.1 + 0.2 * f.sigma2[1] + 0.3 * 4.0));
}

TEST_CASE("log likelihood equals the normal formula") {
    ArmaGarchModel m;
    m.orders = {0, 0, 0, 0};
    m.mu = 0.3;
    m.omega = 0.8;  // constant variance
    Eigen::VectorXd z(4);
    z << 0.0, 0.5, 1.0, -0.2;
    double manual = 0.0;
    for (Eigen::Index t = 0; t < 4; ++t) {
        double e = z[t] - 0.3;
        manual += -0.5 * std::log(2.0 * M_PI * 0.8) - e * e / (2.0 * 0.8);
    }
    CHECK(garch_loglik(m, z) == Catch::Approx(manual));
}

TEST_CASE("white noise fit recovers mean and variance") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(1.5, 2.0);
    Eigen::VectorXd z(3000);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = g(rng);
    auto m = fit_arma_garch(z, {0, 0, 0, 0}, InnovationFamily::Normal, 0);
    CHECK(m.mu == Catch::Approx(z.mean()).margin(0.01));
    double var = (z.array() - z.mean()).square().sum() / double(z.size() - 1);
    CHECK(m.omega == Catch::Approx(var).epsilon(0.02));
    CHECK(m.converged);
    CHECK(m.aic == Catch::Approx(2.0 * 2 - 2.0 * m.loglik));
}

TEST_CASE("stationarity constraint is enforced") {
    // IGARCH-like simulated data must still produce alpha+beta < 1
    ArmaGarchModel truth;
    truth.orders = {0, 0, 1, 1};
    truth.mu = 0.0;
    truth.omega = 0.05;
    truth.alpha = Eigen::VectorXd::Constant(1, 0.55);
    truth.beta = Eigen::VectorXd::Constant(1, 0.44);
    auto z = simulate_arma_garch(truth, 3000, 5);
    auto m = fit_arma_garch(z, {0, 0, 1, 1}, InnovationFamily::Normal, 0);
    CHECK(m.persistence() <= 1.0 - 1e-6 + 1e-12);
    CHECK(m.omega > 0.0);
    CHECK(m.alpha.minCoeff() >= 0.0);
    CHECK(m.beta.minCoeff() >= 0.0);
}

TEST_CASE("forecast oracles") {
    ArmaGarchModel ar1;
    ar1.orders = {1, 0, 0, 0};
    ar1.mu = 0.0;
    ar1.ar = Eigen::VectorXd::Constant(1, 0.5);
    ar1.omega = 1.0;
    Eigen::VectorXd hist(3);
    hist << 0.0, 1.0, 2.0;
    auto f = forecast_one_step(ar1, hist);
    CHECK(f.mean == Catch::Approx(1.0));  // 0.5 * 2

    ArmaGarchModel g11;
    g11.orders = {0, 0, 1, 1};
    g11.mu = 0.0;
    g11.omega = 0.1;
    g11.alpha = Eigen::VectorXd::Constant(1, 0.2);
    g11.beta = Eigen::VectorXd::Constant(1, 0.7);
    // choose history so that the final eps^2 and sigma^2 are known
    Eigen::VectorXd h2(2);
    h2 << 1.0, -1.0;
    auto filt = garch_filter(g11, h2);
    auto fc = forecast_one_step(g11, h2);
    double expect = 0.1 + 0.2 * filt.sigma2[1] + 0.7 * filt.eps[1] * filt.eps[1];
    CHECK(fc.sigma * fc.sigma == Catch::Approx(expect));

    ArmaGarchModel flat;
    flat.orders = {0, 0, 0, 0};
    flat.mu = 0.42;
    flat.omega = 1.0;
    CHECK(forecast_one_step(flat, h2).mean == Catch::Approx(0.42));
}

TEST_CASE("exceedance probability oracles") {
    ArmaGarchModel m;
    m.orders = {0, 0, 0, 0};
    m.family = InnovationFamily::Normal;
    m.omega = 1.0;
    CHECK(exceedance_probability(m, 0.0, 1.0) == Catch::Approx(0.5));
    CHECK(exceedance_probability(m, 1.6449, 1.0) == Catch::Approx(0.05).margin(1e-4));
    CHECK(exceedance_probability(m, 50.0, 1.0) < 1e-10);
    // monotone decreasing in the mean forecast
    double prev = 1.0;
    for (double mean : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        double p = exceedance_probability(m, mean, 1.5);
        CHECK(p < prev);
        prev = p;
    }
    CHECK_THROWS_AS(exceedance_probability(m, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("model selection prefers parsimony on constant-variance data") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd z(400);
    double prev = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        prev = 0.5 * prev + g(rng);
        z[i] = prev;
    }
    GarchGridOptions opt;
    opt.max_ar = 1;
    opt.max_ma = 0;
    opt.max_garch_sig = 1;
    opt.max_garch_eps = 1;
    opt.families = {InnovationFamily::Normal};
    opt.window = 400;
    auto m = select_arma_garch(z, opt);
    CHECK(m.orders.ar == 1);
    // constant-variance data: no or negligible GARCH structure
    double arch = m.persistence();
    CHECK((m.orders.garch_sig + m.orders.garch_eps == 0 || arch < 0.25));
}

TEST_CASE("garch parameter recovery within tolerance") {
    ArmaGarchModel truth;
    truth.orders = {0, 1, 1, 1};
    truth.mu = 3.20;
    truth.ma = Eigen::VectorXd::Constant(1, 0.19);
    truth.omega = 0.10;
    truth.alpha = Eigen::VectorXd::Constant(1, 0.22);
    truth.beta = Eigen::VectorXd::Constant(1, 0.69);
    truth.family = InnovationFamily::SkewStudent;
    truth.skew = 0.77;
    truth.shape = 7.92;
    auto z = simulate_arma_garch(truth, 20000, 42);
    auto m = fit_arma_garch(z, truth.orders, truth.family, 0);
    CHECK(std::abs(m.mu - 3.20) / 3.20 < 0.15);
    CHECK(std::abs(m.ma[0] - 0.19) / 0.19 < 0.15);
    CHECK(std::abs(m.omega - 0.10) / 0.10 < 0.15);
    CHECK(std::abs(m.alpha[0] - 0.22) / 0.22 < 0.15);
    CHECK(std::abs(m.beta[0] - 0.69) / 0.69 < 0.15);
    CHECK(std::abs(m.skew - 0.77) / 0.77 < 0.25);
    CHECK(std::abs(m.shape - 7.92) / 7.92 < 0.25);
}

TEST_CASE("warm starts keep refits close to the previous optimum") {
    ArmaGarchModel truth;
    truth.orders = {0, 0, 1, 1};
    truth.mu = 0.5;
    truth.omega = 0.1;
    truth.alpha = Eigen::VectorXd::Constant(1, 0.3);
    truth.beta = Eigen::VectorXd::Constant(1, 0.5);
    auto z = simulate_arma_garch(truth, 600, 9);
    auto cold = fit_arma_garch(z.head(500), truth.orders, InnovationFamily::Normal, 250);
    auto warm = fit_arma_garch(z.head(501), truth.orders, InnovationFamily::Normal, 250, &cold);
    CHECK(std::abs(warm.mu - cold.mu) < 0.5);
    CHECK(warm.loglik > -std::numeric_limits<double>::infinity());
}

TEST_CASE("simulation is deterministic and seed-sensitive") {
    ArmaGarchModel m;
    m.orders = {0, 0, 1, 1};
    m.mu = 0.0;
    m.omega = 0.1;
    m.alpha = Eigen::VectorXd::Constant(1, 0.2);
    m.beta = Eigen::VectorXd::Constant(1, 0.7);
    auto a = simulate_arma_garch(m, 500, 1);
    auto b = simulate_arma_garch(m, 500, 1);
    auto c = simulate_arma_garch(m, 500, 2);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}
