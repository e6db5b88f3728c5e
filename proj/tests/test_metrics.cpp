#include "matlda/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace matlda;

TEST(Misclassification, Examples) {
    const std::vector<int> truth = {1, 2, 3, 1, 2, 3, 1, 2, 3, 1};
    EXPECT_DOUBLE_EQ(misclassification_rate(truth, truth), 0.0);
    std::vector<int> wrong = truth;
    for (auto& w : wrong) w = w % 3 + 1;
    EXPECT_DOUBLE_EQ(misclassification_rate(wrong, truth), 1.0);
    std::vector<int> some = truth;
    some[0] = some[4] = some[7] = 3;
    EXPECT_DOUBLE_EQ(misclassification_rate(some, truth), 0.3);
    EXPECT_THROW(misclassification_rate({1}, {1, 2}), std::invalid_argument);
    EXPECT_THROW(misclassification_rate({}, {}), std::invalid_argument);
}

TEST(Support, PerfectRecovery) {
    std::vector<Matrix> mu = {Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    mu[1](0, 0) = 1.0;
    mu[2](1, 1) = 2.0;
    const auto s = support_metrics(mu, mu);
    EXPECT_DOUBLE_EQ(*s.tpr, 1.0);
    EXPECT_DOUBLE_EQ(*s.tnr, 1.0);
    EXPECT_EQ(s.d_star_support.rows(), 4);
    EXPECT_EQ(s.d_star_support.cols(), 2);
}

TEST(Support, FullyFusedEstimate) {
    std::vector<Matrix> truth = {Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    truth[1](0, 1) = 1.0;
    const std::vector<Matrix> fused(3, Matrix::Constant(2, 2, 0.3));
    const auto s = support_metrics(fused, truth);
    EXPECT_DOUBLE_EQ(*s.tpr, 0.0);
    EXPECT_DOUBLE_EQ(*s.tnr, 1.0);
}

TEST(Support, HandBuiltCase) {
    // D* columns: mu1 - mu2 and mu2 - mu3, 4 entries each.
    // True nonzeros: D*(0,0) and D*(3,1). Estimated: finds (0,0), misses (3,1).
    std::vector<Matrix> truth = {Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    truth[0](0, 0) = 1.0;  // vec index 0 in column 0
    truth[2](1, 1) = 1.0;  // vec index 3 in column 1
    std::vector<Matrix> est = {Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    est[0](0, 0) = 0.7;
    const auto s = support_metrics(est, truth);
    EXPECT_DOUBLE_EQ(*s.tpr, 0.5);
    EXPECT_DOUBLE_EQ(*s.tnr, 1.0);
}

TEST(Support, UndefinedRatesAreEmpty) {
    const std::vector<Matrix> same(2, Matrix::Zero(1, 2));
    const auto s = support_metrics(same, same);
    EXPECT_FALSE(s.tpr.has_value());
    EXPECT_DOUBLE_EQ(*s.tnr, 1.0);
    const std::vector<Matrix> apart = {Matrix::Zero(1, 2), Matrix::Ones(1, 2)};
    const auto t = support_metrics(apart, apart);
    EXPECT_FALSE(t.tnr.has_value());
    EXPECT_DOUBLE_EQ(*t.tpr, 1.0);
}

TEST(Support, ToleranceAppliesToBoth) {
    const std::vector<Matrix> truth = {Matrix::Zero(1, 2), Matrix::Constant(1, 2, 1e-9)};
    const std::vector<Matrix> est = {Matrix::Zero(1, 2), Matrix::Constant(1, 2, 1e-9)};
    EXPECT_FALSE(support_metrics(est, truth).tpr.has_value());
}

TEST(Support, InvariantToRowAndColumnPermutation) {
    oracle::TestRng rng(1);
    std::vector<Matrix> truth(3, Matrix::Zero(3, 4)), est(3);
    for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < 4; ++k) truth[j](rng.integer(0, 2), rng.integer(0, 3)) = rng.normal();
        est[j] = truth[j];
        est[j](rng.integer(0, 2), rng.integer(0, 3)) = rng.normal();
    }
    const auto base = support_metrics(est, truth);
    Eigen::PermutationMatrix<Eigen::Dynamic> pr(3), pc(4);
    pr.indices() << 2, 0, 1;
    pc.indices() << 1, 3, 0, 2;
    std::vector<Matrix> t2, e2;
    for (int j = 0; j < 3; ++j) {
        t2.push_back(pr * truth[j] * pc);
        e2.push_back(pr * est[j] * pc);
    }
    const auto perm = support_metrics(e2, t2);
    EXPECT_EQ(base.tpr, perm.tpr);
    EXPECT_EQ(base.tnr, perm.tnr);
}

TEST(Support, ShapeAndErrors) {
    const std::vector<Matrix> a(4, Matrix::Zero(2, 3));
    EXPECT_EQ(consecutive_differences(a).cols(), 3);
    EXPECT_EQ(consecutive_differences(a).rows(), 6);
    EXPECT_THROW(support_metrics(a, std::vector<Matrix>(3, Matrix::Zero(2, 3))), std::invalid_argument);
    EXPECT_THROW(support_metrics(a, std::vector<Matrix>(4, Matrix::Zero(3, 2))), std::invalid_argument);
}
