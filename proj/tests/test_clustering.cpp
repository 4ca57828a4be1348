#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lfp/clustering.hpp"

using namespace lfp;

TEST_CASE("cluster assignment picks the arg-max loading") {
    Eigen::MatrixXd w(4, 3);
    w << 0.9, 0.1, 0.0,   // -> 0
         0.0, 0.8, 0.2,   // -> 1
         0.3, 0.3, 0.9,   // -> 2
         0.5, 0.5, 0.1;   // tie -> lowest index 0
    auto a = assign_clusters(w);
    CHECK(a.labels == std::vector<int>{0, 1, 2, 0});
    CHECK(a.p == 3);
}

TEST_CASE("assets with no meaningful loading stay unassigned") {
    Eigen::MatrixXd w(3, 2);
    w << 1.0, 0.0,
         0.0, 0.0,                        // all zero -> unassigned
         kAssignmentEpsilon / 2, 0.0;     // below epsilon -> unassigned
    auto a = assign_clusters(w);
    CHECK(a.labels[0] == 0);
    CHECK(a.labels[1] == kUnassigned);
    CHECK(a.labels[2] == kUnassigned);
    auto members = a.members();
    REQUIRE(members.size() == 2);
    CHECK(members[0] == std::vector<int>{0});
    CHECK(members[1].empty());
}

TEST_CASE("adjusted rand index oracle values") {
    // identical partitions
    std::vector<int> a{0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == Catch::Approx(1.0));
    // permuted labels are still a perfect match
    std::vector<int> b{2, 2, 0, 0, 1, 1};
    CHECK(adjusted_rand_index(a, b) == Catch::Approx(1.0));

    // hand-computed contingency: a = {0,0,0,1,1,1}, c = {0,0,1,1,2,2}
    // pairs: sum_ij C(n_ij,2) = 1+1 = 2; sum_i C(a_i,2) = 3+3 = 6;
    // sum_j C(b_j,2) = 1+1+1 = 3; C(6,2) = 15
    // ARI = (2 - 6*3/15) / ((6+3)/2 - 6*3/15) = 0.8/3.3
    std::vector<int> a2{0, 0, 0, 1, 1, 1};
    std::vector<int> c2{0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a2, c2) == Catch::Approx(0.8 / 3.3));
}

TEST_CASE("ari of independent large random partitions is near zero") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> lab(0, 3);
    std::vector<int> a(2000), b(2000);
    for (auto& v : a) v = lab(rng);
    for (auto& v : b) v = lab(rng);
    CHECK(std::abs(adjusted_rand_index(a, b)) < 0.05);
}

TEST_CASE("unassigned labels count as singletons in ari") {
    std::vector<int> a{0, 0, 1, 1};
    std::vector<int> b{0, 0, 1, kUnassigned};
    double with_unassigned = adjusted_rand_index(a, b);
    // treating the unassigned point as its own cluster: contingency differs
    // from a perfect match
    CHECK(with_unassigned < 1.0);
    CHECK(with_unassigned > 0.0);
    // two all-unassigned vectors are all singletons: identical partitions
    std::vector<int> u{kUnassigned, kUnassigned, kUnassigned};
    CHECK(adjusted_rand_index(u, u) == Catch::Approx(1.0));
}

TEST_CASE("consensus matrix averages co-membership") {
    ClusterAssignment a1{{0, 0, 1}, 2, ClusterSource::Nmf};
    ClusterAssignment a2{{0, 1, 1}, 2, ClusterSource::Nmf};
    auto c = consensus_matrix({a1, a2});
    CHECK(c(0, 1) == Catch::Approx(0.5));
    CHECK(c(1, 2) == Catch::Approx(0.5));
    CHECK(c(0, 2) == Catch::Approx(0.0));
    CHECK(c(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("kmeans asset clustering recovers planted blocks") {
    auto planted = test::make_planted(500, 12, 3, 77);
    auto panel = test::panel_from_matrix(planted.x);
    Eigen::MatrixXd x = fit_normalizer(panel).apply(planted.x);
    auto a = kmeans_assets(x, 3, 1);
    CHECK(adjusted_rand_index(a.labels, planted.labels) > 0.9);
    CHECK(a.source == ClusterSource::KMeans);
}

TEST_CASE("select_model prefers the planted factor count") {
    auto planted = test::make_planted(700, 12, 3, 123);
    auto panel = test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    // roughly 700 weekdays ~ 2.7 years from 2015-01-05
    Date train_end(2017, 3, 1);
    auto plan = make_splits(panel, train_end, 2, Date(2017, 4, 1));
    std::vector<SelectionCandidate> candidates{nmf_candidate(2), nmf_candidate(3),
                                               nmf_candidate(4)};
    auto report = select_model(panel, plan, candidates, 4, 60, 9, 0.95);
    REQUIRE(report.chosen.has_value());
    CHECK(report.scores[*report.chosen].name == "p=3");
    for (const auto& s : report.scores) {
        CHECK(s.consensus.rows() == 12);
        CHECK(s.consensus.minCoeff() >= 0.0);
        CHECK(s.consensus.maxCoeff() <= 1.0 + 1e-12);
    }
}

TEST_CASE("select_model enforces the stability floor") {
    auto planted = test::make_planted(700, 12, 3, 321);
    auto panel = test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    auto plan = make_splits(panel, Date(2017, 3, 1), 2, Date(2017, 4, 1));
    auto report =
        select_model(panel, plan, {nmf_candidate(3)}, 4, 60, 10, /*ari_floor=*/1.01);
    CHECK_FALSE(report.chosen.has_value());  // floor unattainable
}

TEST_CASE("select_model input validation") {
    auto planted = test::make_planted(300, 6, 2, 1);
    auto panel = test::panel_from_matrix(planted.x, Date(2015, 1, 5));
    auto plan = make_splits(panel, Date(2015, 9, 1), 1, Date(2015, 10, 1));
    CHECK_THROWS_AS(select_model(panel, plan, {}, 3), std::invalid_argument);
    CHECK_THROWS_AS(select_model(panel, plan, {nmf_candidate(2)}, 0), std::invalid_argument);
}
