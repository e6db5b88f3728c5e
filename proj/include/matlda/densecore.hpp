#pragma once

// Dense linear-algebra kernels shared by the rest of the library. Storage is
// Eigen; the wrappers here add the symmetry/finiteness invariants and the
// error reporting the solvers rely on.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace matlda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class not_positive_definite : public numeric_error {
public:
    not_positive_definite(const std::string& what, Eigen::Index pivot)
        : numeric_error(what + ": not positive definite (pivot " + std::to_string(pivot) + ")"),
          pivot_(pivot) {}
    Eigen::Index pivot() const noexcept { return pivot_; }

private:
    Eigen::Index pivot_;
};

class eigen_convergence_error : public numeric_error {
public:
    explicit eigen_convergence_error(Eigen::Index iterations)
        : numeric_error("symmetric eigensolver did not converge after " +
                        std::to_string(iterations) + " iterations"),
          iterations_(iterations) {}
    Eigen::Index iterations() const noexcept { return iterations_; }

private:
    Eigen::Index iterations_;
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_finite(const Matrix& a, const char* what) {
    if (!a.allFinite()) throw numeric_error(std::string(what) + ": non-finite entry");
}

/// Symmetric matrix. Construction averages with the transpose so that drift
/// from accumulated floating-point updates never leaks into the solvers.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Matrix& a) : m_(a) {
        if (a.rows() != a.cols()) throw std::invalid_argument("SymMatrix: matrix is not square");
        require_finite(a, "SymMatrix");
        m_ = 0.5 * (a + a.transpose());
    }
    static SymMatrix identity(Eigen::Index d) { return SymMatrix(Matrix::Identity(d, d)); }
    static SymMatrix diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

    Eigen::Index dim() const noexcept { return m_.rows(); }
    const Matrix& mat() const noexcept { return m_; }
    double operator()(Eigen::Index a, Eigen::Index b) const { return m_(a, b); }

    SymMatrix scaled(double t) const {
        SymMatrix out;
        out.m_ = t * m_;
        return out;
    }
    SymMatrix diag_part() const { return diagonal(m_.diagonal()); }

private:
    Matrix m_;
};

struct SymEigen {
    Vector values;   // descending
    Matrix vectors;  // columns are eigenvectors, orthonormal
};

/// Symmetric eigendecomposition (Householder tridiagonalisation + implicit QL,
/// deterministic). Eigenvalues are returned in descending order.
inline SymEigen sym_eigen(const SymMatrix& a) {
    const Eigen::Index d = a.dim();
    if (d == 0) return {};
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat());
    if (es.info() != Eigen::Success) throw eigen_convergence_error(30 * d);
    SymEigen out;
    out.values = es.eigenvalues().reverse();
    out.vectors = es.eigenvectors().rowwise().reverse();
    return out;
}

inline double min_eigenvalue(const SymMatrix& a) {
    if (a.dim() == 0) throw std::invalid_argument("min_eigenvalue: empty matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw eigen_convergence_error(30 * a.dim());
    return es.eigenvalues()(0);
}

/// Lower Cholesky factor L with A = L L^T. Reports the first non-positive pivot.
inline Matrix cholesky_lower(const SymMatrix& a) {
    Eigen::LLT<Matrix> llt(a.mat());
    if (llt.info() == Eigen::Success) {
        Matrix l = llt.matrixL();
        if (l.diagonal().minCoeff() > 0.0) return l;
    }
    // Left-looking pass to locate the failing pivot for the diagnostic.
    const Eigen::Index d = a.dim();
    Matrix l = Matrix::Zero(d, d);
    const Matrix& m = a.mat();
    for (Eigen::Index j = 0; j < d; ++j) {
        const double diag = m(j, j) - l.row(j).head(j).squaredNorm();
        if (!(diag > 0.0)) throw not_positive_definite("cholesky", j);
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < d; ++i)
            l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
    return l;
}

/// Solves A X = B for positive definite A.
inline Matrix chol_solve(const SymMatrix& a, const Matrix& b) {
    if (b.rows() != a.dim()) throw std::invalid_argument("chol_solve: dimension mismatch");
    const Matrix l = cholesky_lower(a);
    Matrix x = l.triangularView<Eigen::Lower>().solve(b);
    l.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

/// Inverse of a positive definite matrix.
inline SymMatrix spd_inverse(const SymMatrix& a) {
    return SymMatrix(chol_solve(a, Matrix::Identity(a.dim(), a.dim())));
}

/// log det of a positive definite matrix.
inline double spd_logdet(const SymMatrix& a) {
    const Matrix l = cholesky_lower(a);
    return 2.0 * l.diagonal().array().log().sum();
}

inline double l1_norm(const Matrix& a) { return a.cwiseAbs().sum(); }
inline double l1_norm(const SymMatrix& a) { return l1_norm(a.mat()); }

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Column-stacking vectorisation.
inline Vector vec(const Matrix& a) {
    return Eigen::Map<const Vector>(a.data(), a.size());
}

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) throw std::invalid_argument("unvec: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

}  // namespace matlda
