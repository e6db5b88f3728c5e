#include "matlda/matnorm.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace matlda;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

LabeledMatrixDataset random_dataset(oracle::TestRng& rng, Eigen::Index r, Eigen::Index c, int J, int n) {
    LabeledMatrixDataset d{r, c, J, {}, {}};
    for (int i = 0; i < n; ++i) {
        const int y = i < J ? i + 1 : rng.integer(1, J);
        d.y.push_back(y);
        d.x.push_back(rng.matrix(r, c) + Matrix::Constant(r, c, 0.5 * y));
    }
    return d;
}

}  // namespace

TEST(ClassMeans, TwoClassesOneObservationEach) {
    LabeledMatrixDataset d{1, 2, 2, {Matrix::Constant(1, 2, 1.0), Matrix::Constant(1, 2, 5.0)}, {1, 2}};
    const auto s = class_counts_and_means(d);
    EXPECT_EQ(s.pi_hat, (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(s.means[0], d.x[0]);
    EXPECT_EQ(s.means[1], d.x[1]);
}

TEST(ClassMeans, SingleClass) {
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    LabeledMatrixDataset d{2, 2, 1, {m, m}, {1, 1}};
    EXPECT_EQ(class_counts_and_means(d).means[0], m);
    LabeledMatrixDataset e{1, 1, 1, {scalar(0), scalar(3), scalar(6)}, {1, 1, 1}};
    EXPECT_DOUBLE_EQ(class_counts_and_means(e).means[0](0, 0), 3.0);
}

TEST(ClassMeans, EmptyClassIsNamed) {
    LabeledMatrixDataset d{1, 1, 3, {scalar(0), scalar(1)}, {1, 3}};
    try {
        class_counts_and_means(d);
        FAIL();
    } catch (const data_error& e) {
        EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos);
    }
}

TEST(NegLogLik, ScalarExamples) {
    const SymMatrix one = SymMatrix::identity(1);
    LabeledMatrixDataset d{1, 1, 1, {scalar(1.5)}, {1}};
    EXPECT_DOUBLE_EQ(neg_loglik_g(d, {scalar(1.5)}, one, one), 0.0);
    EXPECT_DOUBLE_EQ(neg_loglik_g(d, {scalar(0.0)}, one, one), 2.25);
}

TEST(NegLogLik, MatchesVecFormOracle) {
    oracle::TestRng rng(11);
    for (int rep = 0; rep < 30; ++rep) {
        const int r = rng.integer(1, 4), c = rng.integer(1, 4), J = rng.integer(1, 3);
        const auto d = random_dataset(rng, r, c, J, 12);
        std::vector<Matrix> mu;
        for (int j = 0; j < J; ++j) mu.push_back(rng.matrix(r, c));
        const SymMatrix phi = rng.spd(r), delta = rng.spd(c);
        const double g = neg_loglik_g(d, mu, phi, delta);
        const double o = oracle::g_vec_form(d, mu, phi.mat(), delta.mat());
        EXPECT_LE(std::abs(g - o), 1e-9 * std::max(1.0, std::abs(o)));
    }
}

TEST(NegLogLik, ScaleInvariance) {
    oracle::TestRng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        const auto d = random_dataset(rng, 3, 4, 2, 10);
        const auto mu = class_counts_and_means(d).means;
        const SymMatrix phi = rng.spd(3), delta = rng.spd(4);
        const double t = rng.uniform(0.1, 10.0);
        const double g0 = neg_loglik_g(d, mu, phi, delta);
        const double g1 = neg_loglik_g(d, mu, phi.scaled(1.0 / t), delta.scaled(t));
        EXPECT_LE(std::abs(g0 - g1), 1e-10 * std::abs(g0));
    }
}

TEST(NegLogLik, RejectsNonPositiveDefinite) {
    LabeledMatrixDataset d{1, 1, 1, {scalar(1.0)}, {1}};
    EXPECT_THROW(neg_loglik_g(d, {scalar(0.0)}, SymMatrix(scalar(-1.0)), SymMatrix::identity(1)), numeric_error);
}

TEST(SampleStatistics, PositiveSemidefinite) {
    oracle::TestRng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        const auto d = random_dataset(rng, 5, 3, 2, 4);
        std::vector<Matrix> mu = {rng.matrix(5, 3), rng.matrix(5, 3)};
        const SymMatrix sp = s_phi(d, mu, rng.spd(3));
        const SymMatrix sd = s_delta(d, mu, rng.spd(5));
        EXPECT_GE(min_eigenvalue(sp), -1e-10 * max_abs(sp.mat()));
        EXPECT_GE(min_eigenvalue(sd), -1e-10 * max_abs(sd.mat()));
    }
}

TEST(NormalizePair, Examples) {
    const SymMatrix delta(Matrix::Constant(3, 3, 0.25) + Matrix::Identity(3, 3));
    const auto [phi_bar, delta_bar] = normalize_pair(SymMatrix::identity(2).scaled(2.0), delta);
    EXPECT_EQ(phi_bar.mat(), Matrix::Identity(2, 2));
    EXPECT_EQ(delta_bar.mat(), 2.0 * delta.mat());
    const auto [p2, d2] = normalize_pair(SymMatrix::identity(2), delta);
    EXPECT_EQ(p2.mat(), Matrix::Identity(2, 2));
    EXPECT_EQ(d2.mat(), delta.mat());
    EXPECT_THROW(normalize_pair(SymMatrix(Matrix::Zero(2, 2)), delta), numeric_error);
}

TEST(Sampler, FixedSeedIsReproducible) {
    const KroneckerPrecision p{SymMatrix::identity(2), SymMatrix::identity(2)};
    Rng a(9), b(9);
    const Matrix x = sample_matrix_normal(Matrix::Zero(2, 2), p, a);
    EXPECT_EQ(x, sample_matrix_normal(Matrix::Zero(2, 2), p, b));
    // Sigma = I: the draw is the standard normals themselves, in vec order.
    Rng c(9);
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_EQ(x(k % 2, k / 2), c.normal());
}

TEST(Sampler, KroneckerAndFullPathsAgreeDrawForDraw) {
    oracle::TestRng trng(14);
    const SymMatrix phi = trng.spd(3), delta = trng.spd(2);
    const Matrix sigma = kron(spd_inverse(delta).mat(), spd_inverse(phi).mat());
    const MatrixNormalSampler ks(KroneckerPrecision{delta, phi});
    const MatrixNormalSampler fs(FullCovariance{SymMatrix(sigma)}, 3, 2);
    Rng a(5), b(5);
    const Matrix mu = trng.matrix(3, 2);
    for (int i = 0; i < 50; ++i) EXPECT_LE((ks.draw(mu, a) - fs.draw(mu, b)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Sampler, EmpiricalCovarianceIdentity) {
    const KroneckerPrecision p{SymMatrix::identity(2), SymMatrix::identity(2)};
    const MatrixNormalSampler s(p);
    Rng rng(21);
    const int n = 100000;
    Matrix acc = Matrix::Zero(4, 4);
    Vector mean = Vector::Zero(4);
    for (int i = 0; i < n; ++i) {
        const Vector v = vec(s.draw(Matrix::Zero(2, 2), rng));
        acc += v * v.transpose();
        mean += v;
    }
    EXPECT_LE((acc / n - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.05);
    EXPECT_LE((mean / n).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Sampler, KroneckerSecondMomentsMatchFullSigma) {
    oracle::TestRng trng(15);
    const SymMatrix phi = trng.spd(2), delta = trng.spd(2);
    const Matrix sigma = kron(spd_inverse(delta).mat(), spd_inverse(phi).mat());
    const MatrixNormalSampler ks(KroneckerPrecision{delta, phi});
    const MatrixNormalSampler fs(FullCovariance{SymMatrix(sigma)}, 2, 2);
    Rng a(31), b(32);
    const int n = 100000;
    Matrix ck = Matrix::Zero(4, 4), cf = Matrix::Zero(4, 4);
    for (int i = 0; i < n; ++i) {
        const Vector u = vec(ks.draw(Matrix::Zero(2, 2), a)), v = vec(fs.draw(Matrix::Zero(2, 2), b));
        ck += u * u.transpose();
        cf += v * v.transpose();
    }
    EXPECT_LE((ck / n - sigma).cwiseAbs().maxCoeff(), 0.05 * std::max(1.0, max_abs(sigma)));
    EXPECT_LE((cf / n - sigma).cwiseAbs().maxCoeff(), 0.05 * std::max(1.0, max_abs(sigma)));
}

TEST(Sampler, RejectsNonPositiveDefinite) {
    Matrix bad = Matrix::Identity(2, 2);
    bad(1, 1) = -1;
    EXPECT_THROW(MatrixNormalSampler(KroneckerPrecision{SymMatrix::identity(2), SymMatrix(bad)}), numeric_error);
    EXPECT_THROW(MatrixNormalSampler(FullCovariance{SymMatrix(bad)}, 2, 1), numeric_error);
}

TEST(FlipFlop, ConsistentForIdentityTruth) {
    const KroneckerPrecision p{SymMatrix::identity(4), SymMatrix::identity(4)};
    const MatrixNormalSampler s(p);
    Rng rng(41);
    LabeledMatrixDataset d{4, 4, 1, {}, {}};
    for (int i = 0; i < 500; ++i) {
        d.x.push_back(s.draw(Matrix::Zero(4, 4), rng));
        d.y.push_back(1);
    }
    const auto res = flipflop_mle(d, 1e-8, 200);
    EXPECT_TRUE(res.converged);
    // Only the product is identified, and the L1 normalisation picks up the
    // off-diagonal noise; compare factors under a trace scaling instead.
    const double t = res.phi.mat().trace() / 4.0;
    EXPECT_LE((res.phi.mat() / t - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.1);
    EXPECT_LE((res.delta.mat() * t - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(FlipFlop, MonotoneTraceAndFixedPoint) {
    oracle::TestRng trng(16);
    const auto d = random_dataset(trng, 4, 3, 2, 40);
    const double tol = 1e-10;
    const auto res = flipflop_mle(d, tol, 500);
    for (std::size_t k = 1; k < res.g_trace.size(); ++k)
        EXPECT_LE(res.g_trace[k], res.g_trace[k - 1] + 1e-10 * std::abs(res.g_trace[k - 1]));
    EXPECT_NEAR(l1_norm(res.phi), 4.0, 1e-10);
    const Matrix resid = spd_inverse(res.phi).mat() - s_phi(d, res.mu, res.delta).mat();
    EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-4);
    const Matrix resid_d = spd_inverse(res.delta).mat() - s_delta(d, res.mu, res.phi).mat();
    EXPECT_LE(resid_d.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_EQ(res.mu, class_counts_and_means(d).means);
}

TEST(FlipFlop, TooFewObservations) {
    oracle::TestRng trng(17);
    const auto d = random_dataset(trng, 6, 1, 1, 5);
    EXPECT_THROW(flipflop_mle(d, 1e-3, 50), numeric_error);
    // n c > r holds but the pooled residuals are rank deficient.
    const auto e = random_dataset(trng, 6, 2, 3, 4);
    try {
        flipflop_mle(e, 1e-3, 50);
        FAIL();
    } catch (const numeric_error& err) {
        EXPECT_NE(std::string(err.what()).find("ridge"), std::string::npos);
    }
}
