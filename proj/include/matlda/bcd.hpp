#pragma once

// Blockwise coordinate descent for the penalised matrix-normal LDA estimator
//
//   f(mu, Phi, Delta) = g(mu, Phi, Delta)
//                       + lambda1 sum_{j<m} || w_jm o (mu_j - mu_m) ||_1
//                       + lambda2 ||Delta||_1 ||Phi||_1
//
// subject to ||Phi||_1 = r. Each outer iteration updates mu (fast AMA),
// Delta (glasso), Phi (glasso), then renormalises the pair.

#include "matlda/densecore.hpp"
#include "matlda/glasso.hpp"
#include "matlda/matnorm.hpp"
#include "matlda/meansolver.hpp"

#include <numeric>
#include <optional>
#include <vector>

namespace matlda {

struct PenaltyConfig {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double epsilon = 1e-6;
    GlassoOptions glasso{};
    AccelConfig ama{};
    double mean_fuse_threshold = 1e-6;
    int max_outer_iter = 100;
    // Flip-flop initialiser settings ("mild" convergence).
    double init_tol = 1e-3;
    int init_max_iter = 50;

    void validate() const {
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("penalty: lambdas must be >= 0");
        if (!(epsilon > 0.0)) throw std::invalid_argument("penalty: epsilon must be > 0");
        if (!(mean_fuse_threshold >= 0.0)) throw std::invalid_argument("penalty: fuse threshold must be >= 0");
        if (max_outer_iter < 1) throw std::invalid_argument("penalty: max_outer_iter must be >= 1");
    }
};

/// Starting point for a fit, typically the result of a neighbouring fit.
struct WarmStart {
    SymMatrix phi;
    SymMatrix delta;
    std::vector<Matrix> gamma;
};

struct FitOptions {
    std::optional<FusionWeights> weights;  // default: 1 / |xbar_j - xbar_m|
    std::optional<WarmStart> warm_start;
};

struct OuterDiagnostics {
    double rho = 0.0;
    int ama_iterations = 0;
    bool ama_converged = false;
    double ama_residual = 0.0;
    bool mu_accepted = true;
    int glasso_delta_iterations = 0;
    int glasso_phi_iterations = 0;
    double glasso_delta_kkt = 0.0;
    double glasso_phi_kkt = 0.0;
};

struct FitResult {
    ModelParameters params;
    std::vector<double> objective_trace;  // f at the initial point, then after each outer iteration
    int outer_iterations = 0;
    std::vector<OuterDiagnostics> inner_diagnostics;
    bool converged = false;
    double final_objective = 0.0;  // f after the post-hoc mean fusion
    std::vector<Matrix> final_gamma;
};

class forced_equal_violation : public numeric_error {
public:
    using numeric_error::numeric_error;
};

inline double fusion_penalty(const std::vector<Matrix>& mu, const FusionWeights& w) {
    const int J = static_cast<int>(mu.size());
    double pen = 0.0;
    for_each_pair(J, [&](int j, int m, std::size_t k) {
        const Matrix d = mu[j] - mu[m];
        for (Eigen::Index b = 0; b < d.cols(); ++b)
            for (Eigen::Index a = 0; a < d.rows(); ++a) {
                if (w.forced_equal[k](a, b)) {
                    if (d(a, b) != 0.0)
                        throw forced_equal_violation("objective: forced-equal mean entry is not fused");
                } else {
                    pen += w.values[k](a, b) * std::abs(d(a, b));
                }
            }
    });
    return pen;
}

inline double penalized_objective_f(const LabeledMatrixDataset& data, const std::vector<Matrix>& mu,
                                    const SymMatrix& phi, const SymMatrix& delta, const PenaltyConfig& cfg,
                                    const FusionWeights& weights) {
    double f = neg_loglik_g(data, mu, phi, delta);
    if (cfg.lambda1 > 0.0) f += cfg.lambda1 * fusion_penalty(mu, weights);
    if (cfg.lambda2 > 0.0) f += cfg.lambda2 * l1_norm(delta) * l1_norm(phi);
    return f;
}

inline double penalized_objective_f(const LabeledMatrixDataset& data, const std::vector<Matrix>& mu,
                                    const SymMatrix& phi, const SymMatrix& delta, const PenaltyConfig& cfg) {
    return penalized_objective_f(data, mu, phi, delta, cfg, compute_weights(class_counts_and_means(data).means));
}

namespace detail {

// Union-find over classes per entry: pairs whose |difference| <= threshold (or
// that are flagged forced-equal) are merged, and each group takes its
// pi-weighted average.
inline void fuse_means(std::vector<Matrix>& mu, const std::vector<double>& pi_hat, double threshold,
                       const FusionWeights* forced_only) {
    const int J = static_cast<int>(mu.size());
    if (J < 2) return;
    const Eigen::Index r = mu[0].rows(), c = mu[0].cols();
    std::vector<int> parent(J);
    auto find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (Eigen::Index b = 0; b < c; ++b) {
        for (Eigen::Index a = 0; a < r; ++a) {
            std::iota(parent.begin(), parent.end(), 0);
            bool any = false;
            for_each_pair(J, [&](int j, int m, std::size_t k) {
                const bool merge = forced_only ? bool(forced_only->forced_equal[k](a, b))
                                               : std::abs(mu[j](a, b) - mu[m](a, b)) <= threshold;
                if (merge) {
                    const int rj = find(j), rm = find(m);
                    if (rj != rm) parent[std::max(rj, rm)] = std::min(rj, rm);
                    any = true;
                }
            });
            if (!any) continue;
            std::vector<double> num(J, 0.0), den(J, 0.0);
            for (int j = 0; j < J; ++j) {
                num[find(j)] += pi_hat[j] * mu[j](a, b);
                den[find(j)] += pi_hat[j];
            }
            for (int j = 0; j < J; ++j) {
                const int root = find(j);
                if (root != j || den[root] != pi_hat[j]) mu[j](a, b) = num[root] / den[root];
            }
        }
    }
}

// A glasso solve that stalls above tolerance still yields its best iterate;
// the caller's descent check decides whether to keep it.
inline GlassoSolution glasso_best_effort(const GlassoProblem& gp, const GlassoOptions& opt, const SymMatrix& start) {
    try {
        return glasso_solve(gp, opt, start);
    } catch (const glasso_convergence_error& e) {
        return e.best();
    }
}

inline bool has_forced(const FusionWeights& w) {
    for (const auto& f : w.forced_equal)
        if (f.any()) return true;
    return false;
}

}  // namespace detail

/// Entries of mu_j - mu_m with |difference| <= threshold are set exactly equal
/// (pi-weighted average over each fused group).
inline std::vector<Matrix> fuse_close_means(std::vector<Matrix> mu, const std::vector<double>& pi_hat,
                                            double threshold) {
    detail::fuse_means(mu, pi_hat, threshold, nullptr);
    return mu;
}

inline FitResult fit(const LabeledMatrixDataset& data, const PenaltyConfig& cfg, const FitOptions& opts = {}) {
    cfg.validate();
    data.validate();
    const ClassSummary summary = class_counts_and_means(data);
    const int J = data.num_classes;
    const Eigen::Index r = data.r, c = data.c;
    const double rd = static_cast<double>(r), cd = static_cast<double>(c);
    const FusionWeights weights = opts.weights ? *opts.weights : compute_weights(summary.means);

    // Initial precisions: diagonal of a mildly converged flip-flop MLE, or the warm start.
    SymMatrix phi, delta;
    std::vector<Matrix> gamma(num_pairs(J), Matrix::Zero(r, c));
    if (opts.warm_start) {
        std::tie(phi, delta) = normalize_pair(opts.warm_start->phi, opts.warm_start->delta);
        if (opts.warm_start->gamma.size() == gamma.size()) gamma = opts.warm_start->gamma;
    } else {
        const FlipFlopResult mle = flipflop_mle(data, cfg.init_tol, cfg.init_max_iter);
        std::tie(phi, delta) = normalize_pair(mle.phi.diag_part(), mle.delta.diag_part());
    }

    FitResult out;
    std::vector<Matrix> mu = summary.means;
    const double f_init = penalized_objective_f(data, mu, phi, delta, cfg, weights);
    out.objective_trace.push_back(f_init);
    const double stop_threshold = cfg.epsilon * std::abs(f_init);
    const bool forced = cfg.lambda1 > 0.0 && detail::has_forced(weights);

    double f_prev = f_init;
    for (int it = 1; it <= cfg.max_outer_iter; ++it) {
        OuterDiagnostics diag;

        // Step 1: mean update.
        MeanProblem mp = make_mean_problem(summary.means, summary.pi_hat, phi, delta, cfg.lambda1, weights);
        FusionState init;
        init.gamma = gamma;
        init.rho = step_size_upper_bound(mp.phi_min_eig, mp.delta_min_eig, summary.pi_hat) / 10.0;
        diag.rho = init.rho;
        MeanSolveResult ms = solve_mean_subproblem(mp, init, cfg.ama);
        diag.ama_iterations = ms.iterations;
        diag.ama_converged = ms.converged;
        diag.ama_residual = ms.primal_residual;
        gamma = ms.state.gamma;
        std::vector<Matrix> mu_new = std::move(ms.mu);
        if (forced) detail::fuse_means(mu_new, summary.pi_hat, 0.0, &weights);
        // Accept only a non-increasing step for the inexact inner solve.
        if (mean_objective(mp, mu_new) <= mean_objective(mp, mu)) {
            mu = std::move(mu_new);
        } else {
            diag.mu_accepted = false;
        }

        // Step 2: Delta update, tau = lambda2 ||Phi||_1 / r.
        {
            GlassoProblem gp{s_delta(data, mu, phi), cfg.lambda2 * l1_norm(phi) / rd};
            const GlassoSolution sol = detail::glasso_best_effort(gp, cfg.glasso, delta);
            diag.glasso_delta_iterations = sol.iterations;
            diag.glasso_delta_kkt = sol.kkt_residual;
            if (glasso_objective(sol.theta, gp) <= glasso_objective(delta, gp)) delta = sol.theta;
        }
        // Step 3: Phi update, tau = lambda2 ||Delta||_1 / c.
        SymMatrix phi_tilde = phi;
        {
            GlassoProblem gp{s_phi(data, mu, delta), cfg.lambda2 * l1_norm(delta) / cd};
            const GlassoSolution sol = detail::glasso_best_effort(gp, cfg.glasso, phi);
            diag.glasso_phi_iterations = sol.iterations;
            diag.glasso_phi_kkt = sol.kkt_residual;
            if (glasso_objective(sol.theta, gp) <= glasso_objective(phi, gp)) phi_tilde = sol.theta;
        }
        // Step 4: identifiability normalisation.
        std::tie(phi, delta) = normalize_pair(phi_tilde, delta);

        const double f = penalized_objective_f(data, mu, phi, delta, cfg, weights);
        out.objective_trace.push_back(f);
        out.inner_diagnostics.push_back(diag);
        out.outer_iterations = it;
        // Step 5.
        if (f_prev - f < stop_threshold) {
            out.converged = true;
            break;
        }
        f_prev = f;
    }

    if (cfg.lambda1 > 0.0) mu = fuse_close_means(std::move(mu), summary.pi_hat, cfg.mean_fuse_threshold);
    out.params.priors = summary.pi_hat;
    out.params.means = std::move(mu);
    out.params.phi = phi;
    out.params.delta = delta;
    out.final_objective = penalized_objective_f(data, out.params.means, phi, delta, cfg, weights);
    out.final_gamma = std::move(gamma);
    return out;
}

inline WarmStart warm_start_from(const FitResult& r) {
    return WarmStart{r.params.phi, r.params.delta, r.final_gamma};
}

}  // namespace matlda
