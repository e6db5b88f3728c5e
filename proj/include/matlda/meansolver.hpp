#pragma once

// Fused-mean block update. For fixed (Phi, Delta) solve
//
//   min_mu  sum_j pi_j tr{Phi (xbar_j - mu_j) Delta (xbar_j - mu_j)^T}
//           + lambda1 sum_{j<m} || w_jm o (mu_j - mu_m) ||_1
//
// by the alternating minimisation algorithm on the split Theta_jm = mu_j - mu_m:
// closed-form mu step against the plain Lagrangian, soft-threshold Theta step,
// dual ascent on Gamma. Dual iterates are extrapolated (fast AMA) with a fixed
// restart every 200 iterations and an adaptive restart when the combined
// residual grows.

#include "matlda/densecore.hpp"
#include "matlda/matnorm.hpp"

#include <cstddef>
#include <vector>

namespace matlda {

/// Pairs (j, m), j < m, in lexicographic order; 0-based class indices.
inline std::size_t num_pairs(int J) { return static_cast<std::size_t>(J) * (J - 1) / 2; }

inline std::size_t pair_index(int j, int m, int J) {
    return static_cast<std::size_t>(j) * (2 * J - j - 1) / 2 + static_cast<std::size_t>(m - j - 1);
}

template <class F>
void for_each_pair(int J, F&& f) {
    std::size_t k = 0;
    for (int j = 0; j < J; ++j)
        for (int m = j + 1; m < J; ++m) f(j, m, k++);
}

/// Per-pair entrywise weights. An entry flagged forced_equal carries an
/// infinite weight: the corresponding Theta entry is held at zero.
struct FusionWeights {
    std::vector<Matrix> values;
    std::vector<BoolMatrix> forced_equal;

    static FusionWeights uniform(int J, Eigen::Index r, Eigen::Index c, double value = 1.0) {
        FusionWeights w;
        w.values.assign(num_pairs(J), Matrix::Constant(r, c, value));
        w.forced_equal.assign(num_pairs(J), BoolMatrix::Constant(r, c, false));
        return w;
    }
};

/// w_jm = 1 / |xbar_j - xbar_m| entrywise; zero differences are forced-equal.
inline FusionWeights compute_weights(const std::vector<Matrix>& xbar) {
    const int J = static_cast<int>(xbar.size());
    FusionWeights w;
    w.values.resize(num_pairs(J));
    w.forced_equal.resize(num_pairs(J));
    for_each_pair(J, [&](int j, int m, std::size_t k) {
        const Matrix diff = (xbar[j] - xbar[m]).cwiseAbs();
        w.forced_equal[k] = diff.array() == 0.0;
        w.values[k] = (w.forced_equal[k]).select(0.0, diff.cwiseInverse());
    });
    return w;
}

struct MeanProblem {
    std::vector<Matrix> xbar;
    std::vector<double> pi_hat;
    SymMatrix phi;
    SymMatrix delta;
    double lambda1 = 0.0;
    FusionWeights weights;
    // Cached from the eigendecompositions of phi and delta.
    Matrix phi_inv;
    Matrix delta_inv;
    double phi_min_eig = 0.0;
    double delta_min_eig = 0.0;

    int num_classes() const noexcept { return static_cast<int>(xbar.size()); }
};

inline MeanProblem make_mean_problem(std::vector<Matrix> xbar, std::vector<double> pi_hat, SymMatrix phi,
                                     SymMatrix delta, double lambda1, FusionWeights weights) {
    if (!(lambda1 >= 0.0)) throw std::invalid_argument("mean problem: lambda1 must be nonnegative");
    const int J = static_cast<int>(xbar.size());
    if (J < 1 || pi_hat.size() != xbar.size()) throw std::invalid_argument("mean problem: class count mismatch");
    if (weights.values.size() != num_pairs(J) || weights.forced_equal.size() != num_pairs(J))
        throw std::invalid_argument("mean problem: weights must be keyed by the J(J-1)/2 pairs");
    for (const auto& w : weights.values)
        if ((w.array() < 0.0).any()) throw std::invalid_argument("mean problem: weights must be nonnegative");

    MeanProblem p;
    const SymEigen ephi = sym_eigen(phi);
    const SymEigen edelta = sym_eigen(delta);
    p.phi_min_eig = ephi.values(ephi.values.size() - 1);
    p.delta_min_eig = edelta.values(edelta.values.size() - 1);
    if (!(p.phi_min_eig > 0.0) || !(p.delta_min_eig > 0.0))
        throw not_positive_definite("mean problem precision", 0);
    p.phi_inv = ephi.vectors * ephi.values.cwiseInverse().asDiagonal() * ephi.vectors.transpose();
    p.delta_inv = edelta.vectors * edelta.values.cwiseInverse().asDiagonal() * edelta.vectors.transpose();
    p.xbar = std::move(xbar);
    p.pi_hat = std::move(pi_hat);
    p.phi = std::move(phi);
    p.delta = std::move(delta);
    p.lambda1 = lambda1;
    p.weights = std::move(weights);
    return p;
}

struct FusionState {
    std::vector<Matrix> mu;
    std::vector<Matrix> theta;  // keyed by pair_index
    std::vector<Matrix> gamma;  // keyed by pair_index
    double rho = 1.0;

    static FusionState zeros(int J, Eigen::Index r, Eigen::Index c, double rho) {
        FusionState s;
        s.mu.assign(J, Matrix::Zero(r, c));
        s.theta.assign(num_pairs(J), Matrix::Zero(r, c));
        s.gamma.assign(num_pairs(J), Matrix::Zero(r, c));
        s.rho = rho;
        return s;
    }
};

/// AMA converges for rho in (0, min_j pi_j * 4 k_phi k_delta / J), with k_* the
/// smallest eigenvalues of the precisions.
inline double step_size_upper_bound(double phi_min_eig, double delta_min_eig, const std::vector<double>& pi_hat) {
    const double pmin = *std::min_element(pi_hat.begin(), pi_hat.end());
    return pmin * 4.0 * phi_min_eig * delta_min_eig / static_cast<double>(pi_hat.size());
}

/// Operational step size: one tenth of the upper bound.
inline double step_size_bound(const SymMatrix& phi, const SymMatrix& delta, const std::vector<double>& pi_hat) {
    return step_size_upper_bound(min_eigenvalue(phi), min_eigenvalue(delta), pi_hat) / 10.0;
}

/// mu_j = xbar_j + (1 / (2 pi_j)) Phi^-1 (sum_{m>j} Gamma_jm - sum_{m<j} Gamma_mj) Delta^-1.
inline std::vector<Matrix> mu_step(const FusionState& state, const MeanProblem& prob) {
    const int J = prob.num_classes();
    std::vector<Matrix> g(J, Matrix::Zero(prob.xbar[0].rows(), prob.xbar[0].cols()));
    for_each_pair(J, [&](int j, int m, std::size_t k) {
        g[j] += state.gamma[k];
        g[m] -= state.gamma[k];
    });
    std::vector<Matrix> mu(J);
    for (int j = 0; j < J; ++j) {
        mu[j] = prob.xbar[j];
        mu[j].noalias() += (0.5 / prob.pi_hat[j]) * (prob.phi_inv * g[j] * prob.delta_inv);
    }
    return mu;
}

/// soft(x, tau) = sign(x) max(|x| - tau, 0), entrywise.
inline Matrix soft_threshold(const Matrix& x, const Matrix& tau) {
    return x.binaryExpr(tau, [](double v, double t) {
        if (v > t) return v - t;
        if (v < -t) return v + t;
        return 0.0;
    });
}

/// Theta_jm = soft(mu_j - mu_m - Gamma_jm / rho, lambda1 w_jm / rho); forced
/// entries are zero.
inline std::vector<Matrix> theta_step(const FusionState& state, const MeanProblem& prob) {
    const int J = prob.num_classes();
    std::vector<Matrix> theta(num_pairs(J));
    const double inv_rho = 1.0 / state.rho;
    for_each_pair(J, [&](int j, int m, std::size_t k) {
        const Matrix arg = state.mu[j] - state.mu[m] - inv_rho * state.gamma[k];
        theta[k] = soft_threshold(arg, (prob.lambda1 * inv_rho) * prob.weights.values[k]);
        theta[k] = prob.weights.forced_equal[k].select(0.0, theta[k]);
    });
    return theta;
}

/// Gamma_jm <- Gamma_jm + rho (Theta_jm - mu_j + mu_m).
inline std::vector<Matrix> gamma_step(const FusionState& state) {
    const int J = static_cast<int>(state.mu.size());
    std::vector<Matrix> gamma(num_pairs(J));
    for_each_pair(J, [&](int j, int m, std::size_t k) {
        gamma[k] = state.gamma[k] + state.rho * (state.theta[k] - state.mu[j] + state.mu[m]);
    });
    return gamma;
}

/// Objective of the mean subproblem up to the constant within-class scatter
/// term (which does not depend on mu).
inline double mean_objective(const MeanProblem& prob, const std::vector<Matrix>& mu) {
    const int J = prob.num_classes();
    double quad = 0.0;
    for (int j = 0; j < J; ++j) {
        const Matrix e = prob.xbar[j] - mu[j];
        quad += prob.pi_hat[j] * (prob.phi.mat() * e * prob.delta.mat()).cwiseProduct(e).sum();
    }
    double pen = 0.0;
    if (prob.lambda1 > 0.0) {
        for_each_pair(J, [&](int j, int m, std::size_t k) {
            const Matrix d = mu[j] - mu[m];
            pen += prob.weights.values[k].cwiseProduct(d.cwiseAbs()).sum();
        });
    }
    return quad + prob.lambda1 * pen;
}

struct AccelConfig {
    double tol = 1e-7;
    int max_iter = 10000;
    int restart_interval = 200;
    bool accelerate = true;
    bool adaptive_restart = true;
};

struct MeanSolveResult {
    std::vector<Matrix> mu;
    FusionState state;
    int iterations = 0;
    bool converged = false;
    double primal_residual = 0.0;
    double dual_change = 0.0;
    std::vector<double> residual_trace;
};

inline double max_pair_residual(const FusionState& s) {
    double worst = 0.0;
    for_each_pair(static_cast<int>(s.mu.size()), [&](int j, int m, std::size_t k) {
        worst = std::max(worst, max_abs(s.theta[k] - (s.mu[j] - s.mu[m])));
    });
    return worst;
}

/// Accelerated AMA. `init` supplies the warm-start duals and rho; its mu/theta
/// are recomputed. Hitting max_iter is reported through `converged`, not thrown.
inline MeanSolveResult solve_mean_subproblem(const MeanProblem& prob, const FusionState& init,
                                             const AccelConfig& accel = {}) {
    const int J = prob.num_classes();
    const std::size_t P = num_pairs(J);
    if (!(init.rho > 0.0)) throw std::invalid_argument("solve_mean_subproblem: rho must be positive");
    if (init.gamma.size() != P) throw std::invalid_argument("solve_mean_subproblem: dual state has wrong size");

    MeanSolveResult out;
    FusionState st = init;
    std::vector<Matrix> gamma_prev = init.gamma;  // Gamma^{k-1}
    std::vector<Matrix> gamma_hat = init.gamma;   // extrapolated point
    double alpha = 1.0;
    double combined_prev = std::numeric_limits<double>::infinity();
    const double eta = 0.999;

    if (J == 1) {
        st.mu = prob.xbar;
        out.mu = st.mu;
        out.state = st;
        out.converged = true;
        return out;
    }

    for (int it = 1; it <= accel.max_iter; ++it) {
        st.gamma = gamma_hat;
        st.mu = mu_step(st, prob);
        st.theta = theta_step(st, prob);
        std::vector<Matrix> gamma_new = gamma_step(st);

        double combined = 0.0, dual_change = 0.0, gamma_scale = 1.0;
        for (std::size_t k = 0; k < P; ++k) {
            combined += (gamma_new[k] - gamma_hat[k]).squaredNorm();
            dual_change = std::max(dual_change, max_abs(gamma_new[k] - gamma_prev[k]));
            gamma_scale = std::max(gamma_scale, max_abs(gamma_new[k]));
        }
        combined /= st.rho;
        st.gamma = gamma_new;
        const double primal = max_pair_residual(st);
        out.residual_trace.push_back(primal);
        out.iterations = it;
        out.primal_residual = primal;
        out.dual_change = dual_change / gamma_scale;
        if (primal <= accel.tol && out.dual_change <= accel.tol) {
            out.converged = true;
            break;
        }

        const bool fixed_restart = accel.restart_interval > 0 && it % accel.restart_interval == 0;
        const bool adaptive = accel.adaptive_restart && combined > eta * combined_prev;
        if (!accel.accelerate || fixed_restart || adaptive) {
            alpha = 1.0;
            gamma_hat = gamma_new;
        } else {
            const double alpha_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha * alpha));
            const double beta = (alpha - 1.0) / alpha_next;
            for (std::size_t k = 0; k < P; ++k) gamma_hat[k] = gamma_new[k] + beta * (gamma_new[k] - gamma_prev[k]);
            alpha = alpha_next;
        }
        combined_prev = combined;
        gamma_prev = std::move(gamma_new);
    }
    out.mu = st.mu;
    out.state = std::move(st);
    return out;
}

}  // namespace matlda
