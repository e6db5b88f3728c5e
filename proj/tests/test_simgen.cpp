#include "matlda/simgen.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace matlda;

namespace {

SimulationSpec spec_for(CovModel m, Eigen::Index r, Eigen::Index c, std::uint64_t seed = 1) {
    SimulationSpec s;
    s.model = m;
    s.r = r;
    s.c = c;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(BuildMeans, FourByFourHasZeroOffset) {
    Rng rng(3);
    const auto m = build_means(spec_for(CovModel::M1, 4, 4), rng);
    EXPECT_EQ(m.row_offset, 0);
    EXPECT_EQ(m.col_offset, 0);
}

TEST(BuildMeans, ZeroPattern) {
    auto spec = spec_for(CovModel::M1, 6, 7);
    spec.mean_pattern = {Matrix::Zero(4, 4), Matrix::Zero(4, 4), Matrix::Zero(4, 4)};
    Rng rng(1);
    for (const auto& m : build_means(spec, rng).mu) EXPECT_EQ(m, Matrix::Zero(6, 7));
}

TEST(BuildMeans, SupportConfinedToBlock) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed);
        const auto m = build_means(spec_for(CovModel::M1, 9, 11), rng);
        ASSERT_GE(m.row_offset, 0);
        ASSERT_LE(m.row_offset, 5);
        ASSERT_LE(m.col_offset, 7);
        for (const auto& mu : m.mu) {
            Matrix outside = mu;
            outside.block(m.row_offset, m.col_offset, 4, 4).setZero();
            ASSERT_EQ(outside, Matrix::Zero(9, 11));
        }
        ASSERT_EQ(m.mu[2].block(m.row_offset, m.col_offset, 4, 4), default_mean_pattern()[2]);
    }
}

TEST(BuildCovariance, Model1) {
    Rng rng(1);
    const auto spec = spec_for(CovModel::M1, 4, 5);
    const auto cov = build_covariance(spec, build_means(spec, rng));
    EXPECT_TRUE(cov.kronecker);
    EXPECT_DOUBLE_EQ(cov.row_cov(0, 1), 0.7);
    EXPECT_DOUBLE_EQ(cov.row_cov(0, 3), 0.7 * 0.7 * 0.7);
    EXPECT_DOUBLE_EQ(cov.col_cov(0, 4), 0.7);
    EXPECT_DOUBLE_EQ(cov.col_cov(2, 2), 1.0);
    const SymMatrix two = ar1_covariance(2, 0.7);
    EXPECT_DOUBLE_EQ(two(0, 1), 0.7);
    EXPECT_DOUBLE_EQ(two(1, 1), 1.0);
}

TEST(BuildCovariance, Model2CouplesActiveColumnsOnly) {
    Rng rng(5);
    const auto spec = spec_for(CovModel::M2, 6, 9);
    const auto means = build_means(spec, rng);
    const auto cov = build_covariance(spec, means);
    const BoolMatrix mask = mean_difference_mask(means.mu);
    const Eigen::Array<bool, 1, Eigen::Dynamic> active = mask.colwise().any();
    EXPECT_EQ(active.count(), 4);  // default pattern touches every block column
    for (Eigen::Index a = 0; a < 9; ++a)
        for (Eigen::Index b = 0; b < 9; ++b) {
            const double expect = a == b ? 1.0 : (active(a) && active(b) ? 0.7 : 0.0);
            EXPECT_EQ(cov.col_cov(a, b), expect);
        }
    EXPECT_GT(min_eigenvalue(cov.col_cov), 0.0);
}

TEST(BuildCovariance, Model3RestrictionsAndFactorisation) {
    EXPECT_THROW(spec_for(CovModel::M3, 16, 64).validate(), std::invalid_argument);
    EXPECT_THROW(spec_for(CovModel::M3, 8, 16).validate(), std::invalid_argument);
    EXPECT_NO_THROW(spec_for(CovModel::M3, 32, 8).validate());
    EXPECT_NO_THROW(spec_for(CovModel::M3, 16, 16).validate());
    const auto rho = model3_rhos(8);
    EXPECT_DOUBLE_EQ(rho.front(), 0.5);
    EXPECT_NEAR(rho.back(), 0.9, 1e-15);
    // Equal rho: Sigma = CS(0.5) (x) AR(rho^2) / (1 - rho^2).
    const double p = 0.6;
    const SymMatrix s = model3_covariance(3, std::vector<double>(4, p));
    const Matrix expect =
        kron(compound_symmetric(4, 0.5).mat(), ar1_covariance(3, p * p).mat()) / (1.0 - p * p);
    EXPECT_LE((s.mat() - expect).cwiseAbs().maxCoeff(), 1e-14);
    Rng rng(2);
    const auto spec = spec_for(CovModel::M3, 8, 8);
    const auto cov = build_covariance(spec, build_means(spec, rng));
    EXPECT_FALSE(cov.kronecker);
    EXPECT_GT(min_eigenvalue(cov.sigma), 0.0);
}

TEST(BuildCovariance, Model4) {
    Rng rng(3);
    const auto spec = spec_for(CovModel::M4, 5, 6);
    const auto means = build_means(spec, rng);
    const auto cov = build_covariance(spec, means);
    const BoolMatrix mask = mean_difference_mask(means.mu);
    for (Eigen::Index u = 0; u < 30; ++u) {
        EXPECT_EQ(cov.sigma(u, u), 1.0);
        for (Eigen::Index v = 0; v < 30; ++v)
            if (u != v) {
                EXPECT_EQ(cov.sigma(u, v), mask(u % 5, u / 5) && mask(v % 5, v / 5) ? 0.5 : 0.0);
            }
    }
    EXPECT_GT(min_eigenvalue(cov.sigma), 0.0);
}

TEST(BuildCovariance, Model3PositiveDefiniteAtAllowedShapes) {
    for (auto [r, c] : std::vector<std::pair<int, int>>{{8, 8}, {16, 16}, {32, 8}, {32, 16}}) {
        Rng rng(1);
        const auto spec = spec_for(CovModel::M3, r, c);
        EXPECT_GT(min_eigenvalue(build_covariance(spec, build_means(spec, rng)).sigma), 0.0) << r << "x" << c;
    }
}

TEST(GenerateReplicate, CountsAndDeterminism) {
    const auto spec = spec_for(CovModel::M1, 8, 8, 7);
    const auto a = generate_replicate(spec);
    EXPECT_EQ(a.train.size(), 75u);
    EXPECT_EQ(a.validate.size(), 75u);
    EXPECT_EQ(a.test.size(), 1000u);
    const auto b = generate_replicate(spec);
    EXPECT_EQ(a.row_offset, b.row_offset);
    EXPECT_EQ(a.col_offset, b.col_offset);
    EXPECT_EQ(a.test.y, b.test.y);
    for (std::size_t i = 0; i < a.test.size(); ++i) ASSERT_EQ(a.test.x[i], b.test.x[i]);
    int counts[3] = {0, 0, 0};
    for (int y : a.test.y) ++counts[y - 1];
    for (int k : counts) EXPECT_NEAR(k / 1000.0, 1.0 / 3.0, 0.05);
    EXPECT_NEAR(l1_norm(a.true_params->phi), 8.0, 1e-10);
    EXPECT_NO_THROW(a.train.validate());
}

TEST(GenerateReplicate, FullCovarianceModels) {
    const auto rep = generate_replicate(spec_for(CovModel::M4, 6, 6, 3));
    EXPECT_FALSE(rep.true_params.has_value());
    ASSERT_TRUE(rep.true_sigma.has_value());
    EXPECT_EQ(rep.true_sigma->dim(), 36);
    EXPECT_EQ(rep.train.x[0].rows(), 6);
}

TEST(GenerateReplicate, KroneckerMomentsMatchFullSigma) {
    // Model 1 factors at r = c = 4: both sampling paths match Sigma.
    Rng rng(1);
    const auto spec = spec_for(CovModel::M1, 4, 4);
    const auto cov = build_covariance(spec, build_means(spec, rng));
    const Matrix sigma = kron(cov.col_cov.mat(), cov.row_cov.mat());
    const auto ks = MatrixNormalSampler::from_covariances(cov.row_cov, cov.col_cov);
    const MatrixNormalSampler fs(FullCovariance{SymMatrix(sigma)}, 4, 4);
    Rng a(10), b(11);
    Matrix ck = Matrix::Zero(16, 16), cf = Matrix::Zero(16, 16);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Vector u = vec(ks.draw(Matrix::Zero(4, 4), a)), v = vec(fs.draw(Matrix::Zero(4, 4), b));
        ck += u * u.transpose();
        cf += v * v.transpose();
    }
    EXPECT_LE((ck / n - sigma).cwiseAbs().maxCoeff(), 0.05);
    EXPECT_LE((cf / n - sigma).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SimulationSpec, Validation) {
    EXPECT_THROW(spec_for(CovModel::M1, 3, 8).validate(), std::invalid_argument);
    auto s = spec_for(CovModel::M1, 8, 8);
    s.mean_pattern[0] = Matrix::Zero(3, 4);
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
