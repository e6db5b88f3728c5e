#pragma once

// L1-penalised Gaussian precision estimation
//
//   GL(S, tau) = argmin_{Theta > 0} tr(S Theta) - log det Theta + tau ||Theta||_1
//
// with the penalty on every entry, diagonal included. Solved by blockwise
// coordinate descent on the covariance W = Theta^-1 (one lasso per column),
// with W_aa pinned at S_aa + tau. Termination is on the KKT certificate
// computed from the recovered Theta, not on iterate movement.

#include "matlda/densecore.hpp"

#include <limits>
#include <optional>
#include <string>

namespace matlda {

struct GlassoProblem {
    SymMatrix s;
    double tau = 0.0;

    void validate() const {
        if (!(tau >= 0.0)) throw std::invalid_argument("glasso: tau must be nonnegative");
        if (s.dim() == 0) throw std::invalid_argument("glasso: empty S");
        const double scale = std::max(1.0, max_abs(s.mat()));
        if (min_eigenvalue(s) < -1e-8 * scale) throw std::invalid_argument("glasso: S is not positive semidefinite");
    }
};

struct GlassoSolution {
    SymMatrix theta;
    double kkt_residual = 0.0;
    int iterations = 0;
};

struct GlassoOptions {
    double tol = 1e-6;
    int max_iter = 500;
};

class glasso_convergence_error : public numeric_error {
public:
    glasso_convergence_error(GlassoSolution best, const std::string& what)
        : numeric_error(what), best_(std::move(best)) {}
    const GlassoSolution& best() const noexcept { return best_; }

private:
    GlassoSolution best_;
};

inline double glasso_objective(const SymMatrix& theta, const GlassoProblem& p) {
    return (p.s.mat().cwiseProduct(theta.mat())).sum() - spd_logdet(theta) + p.tau * l1_norm(theta);
}

/// Max violation of the optimality system S - Theta^-1 + tau * sign(Theta) in 0.
inline double glasso_kkt_residual(const SymMatrix& theta, const GlassoProblem& p) {
    const Matrix w = spd_inverse(theta).mat();
    const Matrix& s = p.s.mat();
    double worst = 0.0;
    for (Eigen::Index b = 0; b < s.cols(); ++b) {
        for (Eigen::Index a = 0; a < s.rows(); ++a) {
            const double grad = s(a, b) - w(a, b);
            const double t = theta(a, b);
            double v;
            if (t > 0.0)
                v = std::abs(grad + p.tau);
            else if (t < 0.0)
                v = std::abs(grad - p.tau);
            else
                v = std::max(0.0, std::abs(grad) - p.tau);
            worst = std::max(worst, v);
        }
    }
    return worst;
}

namespace detail {

inline double soft(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

// Coordinate descent for min_beta 1/2 beta' W11 beta - s12' beta + tau ||beta||_1.
inline void glasso_column_lasso(const Matrix& w11, const Vector& s12, double tau, Vector& beta, double tol) {
    const Eigen::Index m = w11.rows();
    Vector wb = w11 * beta;
    for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double wkk = w11(k, k);
            const double partial = s12(k) - (wb(k) - wkk * beta(k));
            const double next = soft(partial, tau) / wkk;
            const double step = next - beta(k);
            if (step != 0.0) {
                wb += w11.col(k) * step;
                beta(k) = next;
                max_change = std::max(max_change, std::abs(step) * wkk);
            }
        }
        if (max_change <= tol) break;
    }
}

}  // namespace detail

inline GlassoSolution glasso_solve(const GlassoProblem& p, const GlassoOptions& opt = {},
                                   const std::optional<SymMatrix>& warm_start = std::nullopt) {
    p.validate();
    if (!(opt.tol > 0.0)) throw std::invalid_argument("glasso: tol must be positive");
    const Eigen::Index d = p.s.dim();
    const Matrix& s = p.s.mat();

    if (p.tau == 0.0) {
        for (Eigen::Index a = 0; a < d; ++a)
            if (!(s(a, a) > 0.0)) throw numeric_error("glasso: unbounded problem (zero diagonal in S with tau = 0)");
        GlassoSolution out;
        try {
            out.theta = spd_inverse(p.s);
        } catch (const not_positive_definite&) {
            throw numeric_error("glasso: unbounded problem (singular S with tau = 0)");
        }
        out.kkt_residual = glasso_kkt_residual(out.theta, p);
        out.iterations = 1;
        if (out.kkt_residual > opt.tol)
            throw glasso_convergence_error(out, "glasso: S is too ill-conditioned to invert accurately");
        return out;
    }

    // beta.col(j) holds -Theta_{-j,j} / Theta_jj. W always starts at the
    // dual-feasible S + tau I; a warm start only seeds the column lassos.
    Matrix w = s;
    Matrix beta = Matrix::Zero(d - 1 > 0 ? d - 1 : 0, d);
    if (warm_start && warm_start->dim() == d) {
        const Matrix& t = warm_start->mat();
        for (Eigen::Index j = 0; j < d; ++j) {
            Eigen::Index k = 0;
            for (Eigen::Index a = 0; a < d; ++a)
                if (a != j) beta(k++, j) = -t(a, j) / t(j, j);
        }
    }
    w.diagonal() = s.diagonal().array() + p.tau;

    auto recover_theta = [&]() {
        Matrix theta = Matrix::Zero(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            double w12_beta = 0.0;
            Eigen::Index k = 0;
            for (Eigen::Index a = 0; a < d; ++a)
                if (a != j) w12_beta += w(a, j) * beta(k++, j);
            const double theta_jj = 1.0 / (w(j, j) - w12_beta);
            theta(j, j) = theta_jj;
            k = 0;
            for (Eigen::Index a = 0; a < d; ++a)
                if (a != j) theta(a, j) = -beta(k++, j) * theta_jj;
        }
        // Keep exact zeros where either side of the pair is zero.
        for (Eigen::Index j = 0; j < d; ++j)
            for (Eigen::Index a = j + 1; a < d; ++a)
                if (theta(a, j) == 0.0 || theta(j, a) == 0.0) theta(a, j) = theta(j, a) = 0.0;
        return SymMatrix(theta);
    };

    const double scale = std::max(1.0, max_abs(s));
    const double lasso_tol = 1e-3 * opt.tol * scale;
    GlassoSolution best;
    best.kkt_residual = std::numeric_limits<double>::infinity();
    Vector s12(d - 1), b(d - 1);
    Matrix w11(d - 1, d - 1);
    for (int it = 1; it <= opt.max_iter; ++it) {
        for (Eigen::Index j = 0; j < d; ++j) {
            Eigen::Index k = 0;
            for (Eigen::Index a = 0; a < d; ++a) {
                if (a == j) continue;
                s12(k) = s(a, j);
                Eigen::Index l = 0;
                for (Eigen::Index q = 0; q < d; ++q)
                    if (q != j) w11(k, l++) = w(a, q);
                ++k;
            }
            b = beta.col(j);
            detail::glasso_column_lasso(w11, s12, p.tau, b, lasso_tol);
            beta.col(j) = b;
            const Vector w12 = w11 * b;
            k = 0;
            for (Eigen::Index a = 0; a < d; ++a)
                if (a != j) {
                    w(a, j) = w(j, a) = w12(k);
                    ++k;
                }
        }
        SymMatrix theta;
        double kkt;
        try {
            theta = recover_theta();
            kkt = glasso_kkt_residual(theta, p);
        } catch (const not_positive_definite&) {
            continue;
        }
        if (kkt < best.kkt_residual) {
            best.theta = theta;
            best.kkt_residual = kkt;
            best.iterations = it;
        }
        if (kkt <= opt.tol) return best;
    }
    if (best.theta.dim() == 0) best.theta = SymMatrix::identity(d);
    throw glasso_convergence_error(best, "glasso: KKT residual " + std::to_string(best.kkt_residual) +
                                             " above tolerance after " + std::to_string(opt.max_iter) +
                                             " sweeps");
}

}  // namespace matlda
