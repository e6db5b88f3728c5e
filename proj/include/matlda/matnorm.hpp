#pragma once

// Matrix-normal model with Kronecker precision Delta (x) Phi: sample
// statistics, the unpenalised negative log-likelihood g, sampling, and the
// flip-flop maximum-likelihood estimator.

#include "matlda/densecore.hpp"
#include "matlda/random.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace matlda {

class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// n observations, each an r x c matrix with a label in 1..J.
struct LabeledMatrixDataset {
    Eigen::Index r = 0;
    Eigen::Index c = 0;
    int num_classes = 0;
    std::vector<Matrix> x;
    std::vector<int> y;

    std::size_t size() const noexcept { return x.size(); }

    void validate() const {
        if (x.size() != y.size()) throw data_error("dataset: label count does not match observation count");
        if (num_classes < 1) throw data_error("dataset: number of classes must be positive");
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i].rows() != r || x[i].cols() != c)
                throw data_error("dataset: observation " + std::to_string(i) + " has wrong dimensions");
            if (y[i] < 1 || y[i] > num_classes)
                throw data_error("dataset: observation " + std::to_string(i) + " has label out of range");
            if (!x[i].allFinite())
                throw data_error("dataset: observation " + std::to_string(i) + " has a non-finite value");
        }
    }

    LabeledMatrixDataset subset(const std::vector<std::size_t>& idx) const {
        LabeledMatrixDataset out{r, c, num_classes, {}, {}};
        out.x.reserve(idx.size());
        out.y.reserve(idx.size());
        for (auto i : idx) {
            out.x.push_back(x[i]);
            out.y.push_back(y[i]);
        }
        return out;
    }
};

struct ModelParameters {
    std::vector<double> priors;
    std::vector<Matrix> means;
    SymMatrix phi;    // r x r row precision
    SymMatrix delta;  // c x c column precision

    int num_classes() const noexcept { return static_cast<int>(means.size()); }
    Eigen::Index r() const noexcept { return phi.dim(); }
    Eigen::Index c() const noexcept { return delta.dim(); }
};

struct ClassSummary {
    std::vector<std::size_t> counts;
    std::vector<double> pi_hat;
    std::vector<Matrix> means;  // sample means, 1/n_j normalised
};

inline ClassSummary class_counts_and_means(const LabeledMatrixDataset& data) {
    const int J = data.num_classes;
    ClassSummary s;
    s.counts.assign(J, 0);
    s.means.assign(J, Matrix::Zero(data.r, data.c));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int j = data.y[i] - 1;
        if (j < 0 || j >= J) throw data_error("class_counts_and_means: label out of range");
        ++s.counts[j];
        s.means[j] += data.x[i];
    }
    const double n = static_cast<double>(data.size());
    s.pi_hat.resize(J);
    for (int j = 0; j < J; ++j) {
        if (s.counts[j] == 0) throw data_error("class " + std::to_string(j + 1) + " has no observations");
        s.means[j] /= static_cast<double>(s.counts[j]);
        s.pi_hat[j] = static_cast<double>(s.counts[j]) / n;
    }
    return s;
}

/// S_phi(mu, Delta) = (1/(n c)) sum_i (x_i - mu_{y_i}) Delta (x_i - mu_{y_i})^T.
inline SymMatrix s_phi(const LabeledMatrixDataset& data, const std::vector<Matrix>& mu, const SymMatrix& delta) {
    Matrix acc = Matrix::Zero(data.r, data.r);
    Matrix e(data.r, data.c);
    for (std::size_t i = 0; i < data.size(); ++i) {
        e = data.x[i] - mu[data.y[i] - 1];
        acc.noalias() += e * delta.mat() * e.transpose();
    }
    acc /= static_cast<double>(data.size()) * static_cast<double>(data.c);
    return SymMatrix(acc);
}

/// S_delta(mu, Phi) = (1/(n r)) sum_i (x_i - mu_{y_i})^T Phi (x_i - mu_{y_i}).
inline SymMatrix s_delta(const LabeledMatrixDataset& data, const std::vector<Matrix>& mu, const SymMatrix& phi) {
    Matrix acc = Matrix::Zero(data.c, data.c);
    Matrix e(data.r, data.c);
    for (std::size_t i = 0; i < data.size(); ++i) {
        e = data.x[i] - mu[data.y[i] - 1];
        acc.noalias() += e.transpose() * phi.mat() * e;
    }
    acc /= static_cast<double>(data.size()) * static_cast<double>(data.r);
    return SymMatrix(acc);
}

/// g(mu, Phi, Delta) = (1/n) sum_i tr{Phi (x_i - mu_j) Delta (x_i - mu_j)^T}
///                     - c log det Phi - r log det Delta.
inline double neg_loglik_g(const LabeledMatrixDataset& data, const std::vector<Matrix>& mu,
                           const SymMatrix& phi, const SymMatrix& delta) {
    const double logdet_phi = spd_logdet(phi);
    const double logdet_delta = spd_logdet(delta);
    const SymMatrix s = s_phi(data, mu, delta);
    const double cd = static_cast<double>(data.c);
    const double quad = cd * (phi.mat().cwiseProduct(s.mat())).sum();
    return quad - cd * logdet_phi - static_cast<double>(data.r) * logdet_delta;
}

/// Rescales (Phi, Delta) -> (t Phi, Delta / t) so that ||Phi||_1 = r. The
/// product Delta (x) Phi, hence every objective, is unchanged.
inline std::pair<SymMatrix, SymMatrix> normalize_pair(const SymMatrix& phi_tilde, const SymMatrix& delta) {
    const double norm = l1_norm(phi_tilde);
    if (!(norm > 0.0)) throw numeric_error("normalize_pair: Phi is zero");
    const double r = static_cast<double>(phi_tilde.dim());
    return {phi_tilde.scaled(r / norm), delta.scaled(norm / r)};
}

/// Covariance of vec(X) as either a Kronecker pair or a dense rc x rc matrix.
struct KroneckerPrecision {
    SymMatrix delta;  // c x c
    SymMatrix phi;    // r x r
};

struct FullCovariance {
    SymMatrix sigma;  // rc x rc, indexed by column-stacked vec(X)
};

/// Draws X with vec(X) ~ N(vec(mu), Sigma). Both paths consume the same rc
/// standard normals in vec order and multiply by the lower Cholesky factor of
/// Sigma; in the Kronecker case that factor is chol(Delta^-1) (x) chol(Phi^-1),
/// applied as A Z B^T without forming it.
class MatrixNormalSampler {
public:
    explicit MatrixNormalSampler(const KroneckerPrecision& p)
        : kronecker_(true),
          row_factor_(cholesky_lower(spd_inverse(p.phi))),
          col_factor_(cholesky_lower(spd_inverse(p.delta))) {}

    static MatrixNormalSampler from_covariances(const SymMatrix& row_cov, const SymMatrix& col_cov) {
        MatrixNormalSampler s;
        s.kronecker_ = true;
        s.row_factor_ = cholesky_lower(row_cov);
        s.col_factor_ = cholesky_lower(col_cov);
        return s;
    }

    MatrixNormalSampler(const FullCovariance& cov, Eigen::Index r, Eigen::Index c)
        : kronecker_(false), full_factor_(cholesky_lower(cov.sigma)), r_(r), c_(c) {
        if (cov.sigma.dim() != r * c) throw std::invalid_argument("MatrixNormalSampler: Sigma must be rc x rc");
    }

    Eigen::Index rows() const noexcept { return kronecker_ ? row_factor_.rows() : r_; }
    Eigen::Index cols() const noexcept { return kronecker_ ? col_factor_.rows() : c_; }

    Matrix draw(const Matrix& mu, Rng& rng) const {
        const Eigen::Index r = rows(), c = cols();
        if (mu.rows() != r || mu.cols() != c) throw std::invalid_argument("MatrixNormalSampler: mean has wrong shape");
        Vector z(r * c);
        for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
        if (kronecker_) {
            const Matrix zm = unvec(z, r, c);
            return mu + row_factor_.triangularView<Eigen::Lower>() * zm * col_factor_.transpose();
        }
        const Vector v = full_factor_.triangularView<Eigen::Lower>() * z;
        return mu + unvec(v, r, c);
    }

private:
    MatrixNormalSampler() = default;

    bool kronecker_ = true;
    Matrix row_factor_;
    Matrix col_factor_;
    Matrix full_factor_;
    Eigen::Index r_ = 0;
    Eigen::Index c_ = 0;
};

inline Matrix sample_matrix_normal(const Matrix& mu, const KroneckerPrecision& p, Rng& rng) {
    return MatrixNormalSampler(p).draw(mu, rng);
}

inline Matrix sample_matrix_normal(const Matrix& mu, const FullCovariance& cov, Rng& rng) {
    return MatrixNormalSampler(cov, mu.rows(), mu.cols()).draw(mu, rng);
}

struct FlipFlopResult {
    SymMatrix phi;
    SymMatrix delta;
    std::vector<Matrix> mu;
    std::vector<double> g_trace;
    int iterations = 0;
    bool converged = false;
};

/// Unpenalised MLE by alternating the closed-form updates
/// Phi <- S_phi(xbar, Delta)^-1 and Delta <- S_delta(xbar, Phi)^-1, stopping on
/// relative change of g below tol.
inline FlipFlopResult flipflop_mle(const LabeledMatrixDataset& data, double tol, int max_iter) {
    const auto n = static_cast<Eigen::Index>(data.size());
    if (n * data.c <= data.r || n * data.r <= data.c)
        throw numeric_error("flipflop_mle: need n*c > r and n*r > c");
    const ClassSummary summary = class_counts_and_means(data);

    FlipFlopResult out;
    out.mu = summary.means;
    SymMatrix delta = SymMatrix::identity(data.c);
    SymMatrix phi = SymMatrix::identity(data.r);
    double g_prev = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        try {
            phi = spd_inverse(s_phi(data, out.mu, delta));
            delta = spd_inverse(s_delta(data, out.mu, phi));
        } catch (const not_positive_definite&) {
            throw numeric_error(
                "flipflop_mle: sample covariance is singular; add a ridge or use more observations");
        }
        std::tie(phi, delta) = normalize_pair(phi, delta);
        const double g = neg_loglik_g(data, out.mu, phi, delta);
        out.g_trace.push_back(g);
        out.iterations = it;
        if (it > 1 && std::abs(g_prev - g) <= tol * std::max(1.0, std::abs(g))) {
            out.converged = true;
            break;
        }
        g_prev = g;
    }
    out.phi = phi;
    out.delta = delta;
    return out;
}

}  // namespace matlda
