#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "lfp/autoencoder.hpp"

using namespace lfp;

namespace {

AutoencoderModel random_model(Eigen::Index d, int p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    AutoencoderModel m;
    m.p = p;
    m.H.resize(d, p);
    m.W.resize(d, p);
    for (Eigen::Index i = 0; i < d; ++i)
        for (int k = 0; k < p; ++k) {
            m.H(i, k) = std::abs(g(rng)) + 0.05;
            m.W(i, k) = std::abs(g(rng)) + 0.05;
        }
    m.b_E = Eigen::VectorXd::NullaryExpr(p, [&](Eigen::Index) { return 0.3 * g(rng); });
    m.b_D = Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) { return 0.3 * g(rng); });
    m.bn_mean = Eigen::VectorXd::Zero(p);
    m.bn_var = Eigen::VectorXd::Ones(p);
    project_constraints(m);
    return m;
}

Eigen::MatrixXd random_batch(Eigen::Index b, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    return Eigen::MatrixXd::NullaryExpr(b, d, [&](Eigen::Index, Eigen::Index) { return g(rng); });
}

}  // namespace

TEST_CASE("encode / decode definitions") {
    auto m = random_model(5, 2, 1);
    Eigen::VectorXd x = random_batch(1, 5, 2).row(0).transpose();
    Eigen::VectorXd z = encode(m, x);
    CHECK(z.isApprox((m.H.transpose() * x + m.b_E).cwiseMax(0.0), 1e-14));
    CHECK(z.minCoeff() >= 0.0);
    Eigen::VectorXd xhat = decode(m, z);
    CHECK(xhat.isApprox(m.W * z + m.b_D, 1e-14));
    CHECK(reconstruct(m, x.transpose()).row(0).transpose().isApprox(xhat, 1e-12));
    CHECK_THROWS_AS(encode(m, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
    // perturb every parameter group of random models; relative error <= 1e-4
    TrainConfig cfg;
    cfg.lambda1 = 1e-3;
    cfg.lambda2 = 1e-2;
    cfg.lambda3 = 1e-2;
    const double h = 1e-5;
    std::mt19937_64 pick(99);

    int checks = 0;
    for (std::uint64_t trial = 0; trial < 10 && checks < 50; ++trial) {
        auto m = random_model(6, 3, 10 + trial);
        Eigen::MatrixXd batch = random_batch(16, 6, 20 + trial);
        auto g = penalized_loss(m, batch, cfg);

        auto fd_check = [&](double* param, double analytic) {
            double orig = *param;
            *param = orig + h;
            double up = penalized_loss(m, batch, cfg).loss;
            *param = orig - h;
            double dn = penalized_loss(m, batch, cfg).loss;
            *param = orig;
            double fd = (up - dn) / (2.0 * h);
            double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
            CHECK(std::abs(fd - analytic) / denom <= 1e-4);
            ++checks;
        };

        std::uniform_int_distribution<Eigen::Index> ri(0, 5), rk(0, 2);
        for (int rep = 0; rep < 5; ++rep) {
            Eigen::Index i = ri(pick), k = rk(pick);
            fd_check(&m.H(i, k), g.dH(i, k));
            fd_check(&m.W(i, k), g.dW(i, k));
            fd_check(&m.b_E[k], g.db_E[k]);
            fd_check(&m.b_D[i], g.db_D[i]);
        }
    }
    CHECK(checks >= 50);
}

TEST_CASE("penalized loss terms are additive and nonnegative") {
    auto m = random_model(5, 2, 3);
    Eigen::MatrixXd batch = random_batch(12, 5, 4);
    TrainConfig none;
    none.lambda1 = none.lambda2 = none.lambda3 = 0.0;
    auto base = penalized_loss(m, batch, none);
    CHECK(base.loss == Catch::Approx(base.mse));

    TrainConfig l1 = none;
    l1.lambda1 = 0.5;
    auto with_l1 = penalized_loss(m, batch, l1);
    CHECK(with_l1.loss ==
          Catch::Approx(base.mse + 0.5 * (m.H.cwiseAbs().sum() + m.W.cwiseAbs().sum())));

    TrainConfig l2 = none;
    l2.lambda2 = 0.7;
    auto with_l2 = penalized_loss(m, batch, l2);
    Eigen::MatrixXd gram = m.W.transpose() * m.W - Eigen::MatrixXd::Identity(2, 2);
    CHECK(with_l2.loss == Catch::Approx(base.mse + 0.7 * gram.norm()));

    CHECK_THROWS_AS(penalized_loss(m, batch.topRows(1), none), std::invalid_argument);
}

TEST_CASE("projection enforces the feasible set") {
    AutoencoderModel m;
    m.p = 2;
    m.H.resize(3, 2);
    m.H << 1.0, -0.5, 2.0, 0.0, -1.0, 0.3;
    m.W = m.H;
    m.b_E = Eigen::VectorXd::Zero(2);
    m.b_D = Eigen::VectorXd::Zero(3);
    project_constraints(m);
    CHECK(m.H.minCoeff() >= 0.0);
    CHECK(m.W.minCoeff() >= 0.0);
    for (int k = 0; k < 2; ++k) {
        CHECK(m.H.col(k).norm() == Catch::Approx(1.0));
        CHECK(m.W.col(k).norm() == Catch::Approx(1.0));
    }
}

TEST_CASE("collapsed columns are restored from the warm start") {
    AutoencoderModel m;
    m.p = 2;
    m.H.resize(3, 2);
    m.H << 0.5, -1.0, 0.5, -2.0, 0.5, -0.1;  // column 1 all negative -> collapses
    m.W = m.H.cwiseAbs();
    m.b_E = Eigen::VectorXd::Zero(2);
    m.b_D = Eigen::VectorXd::Zero(3);
    Eigen::MatrixXd warm = Eigen::MatrixXd::Constant(3, 2, 0.4);
    int n = project_constraints(m, &warm, &warm);
    CHECK(n == 1);
    CHECK(m.H.col(1).norm() == Catch::Approx(1.0));

    AutoencoderModel bad = m;
    bad.H.col(0).setConstant(-1.0);
    CHECK_THROWS_AS(project_constraints(bad), std::runtime_error);
}

TEST_CASE("training reduces validation loss on structured data") {
    auto planted = test::make_planted(400, 6, 2, 55);
    auto panel = test::panel_from_matrix(planted.x);
    Eigen::MatrixXd x = fit_normalizer(panel).apply(planted.x);
    Eigen::MatrixXd train_x = x.topRows(320), val_x = x.bottomRows(80);

    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.patience = 60;
    cfg.n_seeds = 1;
    auto warm = fit_convex_nmf(train_x, 2, 200, 1e-6, 7);
    auto [model, report] = train(train_x, val_x, cfg, warm, 7);

    REQUIRE(!report.val_loss.empty());
    double first = report.val_loss.front();
    double best = report.val_loss[size_t(report.stopping_epoch)];
    CHECK(best <= first);
    // feasibility after training
    CHECK(model.H.minCoeff() >= 0.0);
    CHECK(model.W.minCoeff() >= 0.0);
    for (int k = 0; k < model.p; ++k) {
        CHECK(model.H.col(k).norm() == Catch::Approx(1.0).margin(1e-9));
        CHECK(model.W.col(k).norm() == Catch::Approx(1.0).margin(1e-9));
    }
    // the restored model beats a fresh NMF init on validation reconstruction
    auto init = init_from_nmf(warm);
    double init_mse = (reconstruct(init, val_x) - val_x).squaredNorm();
    double fit_mse = (reconstruct(model, val_x) - val_x).squaredNorm();
    CHECK(fit_mse <= init_mse * 1.05);
}

TEST_CASE("training is deterministic per seed") {
    auto planted = test::make_planted(250, 5, 2, 66);
    auto panel = test::panel_from_matrix(planted.x);
    Eigen::MatrixXd x = fit_normalizer(panel).apply(planted.x);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.patience = 15;
    auto warm = fit_convex_nmf(x.topRows(200), 2, 100, 1e-6, 3);
    auto [m1, r1] = train(x.topRows(200), x.bottomRows(50), cfg, warm, 3);
    auto [m2, r2] = train(x.topRows(200), x.bottomRows(50), cfg, warm, 3);
    CHECK((m1.H - m2.H).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m1.W - m2.W).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r1.val_loss == r2.val_loss);
}

TEST_CASE("ensemble trains one model per seed") {
    auto planted = test::make_planted(250, 5, 2, 12);
    auto panel = test::panel_from_matrix(planted.x);
    Eigen::MatrixXd x = fit_normalizer(panel).apply(planted.x);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.patience = 5;
    cfg.n_seeds = 3;
    auto members = train_ensemble(x.topRows(200), x.bottomRows(50), 2, cfg, 100);
    REQUIRE(members.size() == 3);
    CHECK(members[0].second.seed == 100);
    CHECK(members[2].second.seed == 102);
    // different seeds give different models
    CHECK((members[0].first.H - members[1].first.H).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("autoencoder serialization round trips") {
    auto m = random_model(4, 2, 9);
    m.bn_mean << 0.1, 0.2;
    m.bn_var << 1.1, 0.9;
    std::stringstream buf;
    save_autoencoder(m, buf);
    auto loaded = load_autoencoder(buf);
    CHECK(loaded.p == m.p);
    CHECK(loaded.H.isApprox(m.H, 1e-15));
    CHECK(loaded.W.isApprox(m.W, 1e-15));
    CHECK(loaded.b_E.isApprox(m.b_E, 1e-15));
    CHECK(loaded.b_D.isApprox(m.b_D, 1e-15));
    CHECK(loaded.bn_var.isApprox(m.bn_var, 1e-15));
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.lambda1 = -1.0;
    CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
    TrainConfig cfg2;
    cfg2.patience = cfg2.epochs + 1;
    CHECK_THROWS_AS(cfg2.check(), std::invalid_argument);
}
