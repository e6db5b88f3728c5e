#pragma once

// Simulation designs: three classes whose means differ only on a randomly
// placed 4x4 block, with one of four covariance models for vec(X).
//
//   M1  Sigma = Delta (x) Phi, Phi_ab = 0.7^|a-b|, Delta compound symmetric 0.7
//   M2  as M1 but Delta_cd = 0.7 only between columns carrying mean differences
//   M3  Cov(X_ab, X_cd) = {0.5 [b != d] + [b = d]} (rho_b rho_d)^|a-c| / (1 - rho_b rho_d)
//   M4  unit variances, 0.5 between coordinates carrying mean differences
//
// In M1/M2 the displayed factors are covariance factors (row and column
// covariance); the fitted model's precisions are their inverses.

#include "matlda/densecore.hpp"
#include "matlda/matnorm.hpp"
#include "matlda/random.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace matlda {

enum class CovModel { M1 = 1, M2 = 2, M3 = 3, M4 = 4 };

using MeanPattern = std::array<Matrix, 3>;

/// Default active-block pattern: class 1 zero, class 2 0.5 on the diagonal,
/// class 3 1.0 on the anti-diagonal.
inline MeanPattern default_mean_pattern() {
    MeanPattern p{Matrix::Zero(4, 4), Matrix::Zero(4, 4), Matrix::Zero(4, 4)};
    for (int k = 0; k < 4; ++k) {
        p[1](k, k) = 0.5;
        p[2](k, 3 - k) = 1.0;
    }
    return p;
}

struct SimulationSpec {
    CovModel model = CovModel::M1;
    Eigen::Index r = 8;
    Eigen::Index c = 8;
    std::size_t n_train = 75;
    std::size_t n_validate = 75;
    std::size_t n_test = 1000;
    MeanPattern mean_pattern = default_mean_pattern();
    std::uint64_t seed = 1;

    void validate() const {
        if (r < 4 || c < 4) throw std::invalid_argument("simulation: r and c must be at least 4");
        for (const auto& m : mean_pattern)
            if (m.rows() != 4 || m.cols() != 4 || !m.allFinite())
                throw std::invalid_argument("simulation: mean pattern blocks must be finite 4x4 matrices");
        if (model == CovModel::M3) {
            const auto ok = [](Eigen::Index d) { return d == 8 || d == 16 || d == 32 || d == 64; };
            if (!((r == c && ok(c)) || (r == 32 && ok(c))))
                throw std::invalid_argument(
                    "simulation: model 3 is positive definite only for r = c in {8,16,32,64} or r = 32 with c in "
                    "{8,16,32,64}");
        }
    }
};

struct MeanStructure {
    std::array<Matrix, 3> mu;
    Eigen::Index row_offset = 0;
    Eigen::Index col_offset = 0;
};

/// Places the pattern at a uniformly random admissible offset (shared by all classes).
inline MeanStructure build_means(const SimulationSpec& spec, Rng& rng) {
    spec.validate();
    MeanStructure s;
    s.row_offset = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(spec.r - 3)));
    s.col_offset = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(spec.c - 3)));
    for (int j = 0; j < 3; ++j) {
        s.mu[j] = Matrix::Zero(spec.r, spec.c);
        s.mu[j].block(s.row_offset, s.col_offset, 4, 4) = spec.mean_pattern[j];
    }
    return s;
}

/// Entries (a, b) where some pair of class means differs.
inline BoolMatrix mean_difference_mask(const std::array<Matrix, 3>& mu) {
    BoolMatrix mask = BoolMatrix::Constant(mu[0].rows(), mu[0].cols(), false);
    for (int j = 0; j < 3; ++j)
        for (int m = j + 1; m < 3; ++m) mask = mask || (mu[j].array() != mu[m].array());
    return mask;
}

struct CovarianceTruth {
    bool kronecker = true;
    SymMatrix row_cov;  // r x r (M1/M2)
    SymMatrix col_cov;  // c x c (M1/M2)
    SymMatrix sigma;    // rc x rc, column-stacked vec order (M3/M4)
};

inline SymMatrix ar1_covariance(Eigen::Index d, double rho) {
    Matrix m(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) m(a, b) = std::pow(rho, static_cast<double>(std::abs(a - b)));
    return SymMatrix(m);
}

inline SymMatrix compound_symmetric(Eigen::Index d, double off) {
    Matrix m = Matrix::Constant(d, d, off);
    m.diagonal().setOnes();
    return SymMatrix(m);
}

/// Model 3 covariance for explicit per-column rho values.
inline SymMatrix model3_covariance(Eigen::Index r, const std::vector<double>& rho) {
    const auto c = static_cast<Eigen::Index>(rho.size());
    Matrix s(r * c, r * c);
    for (Eigen::Index d = 0; d < c; ++d)
        for (Eigen::Index cc = 0; cc < r; ++cc)
            for (Eigen::Index b = 0; b < c; ++b)
                for (Eigen::Index a = 0; a < r; ++a) {
                    const double rr = rho[b] * rho[d];
                    const double factor = (b == d) ? 1.0 : 0.5;
                    s(a + b * r, cc + d * r) = factor * std::pow(rr, static_cast<double>(std::abs(a - cc))) / (1.0 - rr);
                }
    return SymMatrix(s);
}

/// rho_k equally spaced on [0.5, 0.9], endpoints included.
inline std::vector<double> model3_rhos(Eigen::Index c) {
    std::vector<double> rho(c);
    for (Eigen::Index k = 0; k < c; ++k)
        rho[k] = c == 1 ? 0.5 : 0.5 + 0.4 * static_cast<double>(k) / static_cast<double>(c - 1);
    return rho;
}

inline CovarianceTruth build_covariance(const SimulationSpec& spec, const MeanStructure& means) {
    spec.validate();
    CovarianceTruth t;
    const BoolMatrix diff = mean_difference_mask(means.mu);
    switch (spec.model) {
        case CovModel::M1:
            t.row_cov = ar1_covariance(spec.r, 0.7);
            t.col_cov = compound_symmetric(spec.c, 0.7);
            return t;
        case CovModel::M2: {
            t.row_cov = ar1_covariance(spec.r, 0.7);
            const Eigen::Array<bool, 1, Eigen::Dynamic> active = diff.colwise().any();
            Matrix d = Matrix::Identity(spec.c, spec.c);
            for (Eigen::Index a = 0; a < spec.c; ++a)
                for (Eigen::Index b = 0; b < spec.c; ++b)
                    if (a != b && active(a) && active(b)) d(a, b) = 0.7;
            t.col_cov = SymMatrix(d);
            break;
        }
        case CovModel::M3:
            t.kronecker = false;
            t.sigma = model3_covariance(spec.r, model3_rhos(spec.c));
            break;
        case CovModel::M4: {
            t.kronecker = false;
            const Eigen::Index p = spec.r * spec.c;
            Matrix s = Matrix::Identity(p, p);
            const Eigen::Map<const BoolMatrix> flat(diff.data(), p, 1);
            for (Eigen::Index u = 0; u < p; ++u)
                for (Eigen::Index v = 0; v < p; ++v)
                    if (u != v && flat(u) && flat(v)) s(u, v) = 0.5;
            t.sigma = SymMatrix(s);
            break;
        }
    }
    const SymMatrix& check = t.kronecker ? t.col_cov : t.sigma;
    const double min_eig = min_eigenvalue(check);
    if (!(min_eig > 0.0))
        throw numeric_error("model " + std::to_string(static_cast<int>(spec.model)) +
                            " covariance is not positive definite (min eigenvalue " + std::to_string(min_eig) + ")");
    return t;
}

struct GeneratedReplicate {
    LabeledMatrixDataset train;
    LabeledMatrixDataset validate;
    LabeledMatrixDataset test;
    std::vector<Matrix> true_means;
    std::optional<ModelParameters> true_params;  // Kronecker models
    std::optional<SymMatrix> true_sigma;         // M3/M4
    Eigen::Index row_offset = 0;
    Eigen::Index col_offset = 0;
};

/// Precision-form parameters of a Kronecker covariance truth, normalised so
/// that ||Phi||_1 = r.
inline ModelParameters true_parameters(const MeanStructure& means, const CovarianceTruth& cov) {
    ModelParameters p;
    p.priors = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    p.means.assign(means.mu.begin(), means.mu.end());
    std::tie(p.phi, p.delta) = normalize_pair(spd_inverse(cov.row_cov), spd_inverse(cov.col_cov));
    return p;
}

inline GeneratedReplicate generate_replicate(const SimulationSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const MeanStructure means = build_means(spec, rng);
    const CovarianceTruth cov = build_covariance(spec, means);
    const MatrixNormalSampler sampler = cov.kronecker
                                            ? MatrixNormalSampler::from_covariances(cov.row_cov, cov.col_cov)
                                            : MatrixNormalSampler(FullCovariance{cov.sigma}, spec.r, spec.c);

    GeneratedReplicate rep;
    rep.row_offset = means.row_offset;
    rep.col_offset = means.col_offset;
    rep.true_means.assign(means.mu.begin(), means.mu.end());
    if (cov.kronecker)
        rep.true_params = true_parameters(means, cov);
    else
        rep.true_sigma = cov.sigma;

    auto draw = [&](std::size_t n) {
        LabeledMatrixDataset d{spec.r, spec.c, 3, {}, {}};
        d.x.reserve(n);
        d.y.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(rng.below(3)) + 1;
            d.y.push_back(label);
            d.x.push_back(sampler.draw(means.mu[label - 1], rng));
        }
        return d;
    };
    rep.train = draw(spec.n_train);
    rep.validate = draw(spec.n_validate);
    rep.test = draw(spec.n_test);
    return rep;
}

}  // namespace matlda
