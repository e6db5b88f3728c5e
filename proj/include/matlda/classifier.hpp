#pragma once

// Plug-in LDA rule for the matrix-normal model:
//   score_j(x) = log pi_j - 1/2 tr{Phi (x - mu_j) Delta (x - mu_j)^T}.

#include "matlda/densecore.hpp"
#include "matlda/matnorm.hpp"

#include <cmath>
#include <vector>

namespace matlda {

struct DiscriminantScores {
    std::vector<double> scores;
    int predicted = 0;  // 1-based label
};

inline DiscriminantScores score(const Matrix& x, const ModelParameters& params) {
    const int J = params.num_classes();
    if (x.rows() != params.r() || x.cols() != params.c())
        throw std::invalid_argument("score: observation is " + std::to_string(x.rows()) + "x" +
                                    std::to_string(x.cols()) + ", model expects " + std::to_string(params.r()) +
                                    "x" + std::to_string(params.c()));
    DiscriminantScores out;
    out.scores.resize(J);
    for (int j = 0; j < J; ++j) {
        const Matrix e = x - params.means[j];
        const double quad = (params.phi.mat() * e * params.delta.mat()).cwiseProduct(e).sum();
        out.scores[j] = std::log(params.priors[j]) - 0.5 * quad;
    }
    // Strict comparison keeps the smallest index on ties.
    int best = 0;
    for (int j = 1; j < J; ++j)
        if (out.scores[j] > out.scores[best]) best = j;
    out.predicted = best + 1;
    return out;
}

inline std::vector<int> predict_batch(const std::vector<Matrix>& xs, const ModelParameters& params) {
    std::vector<int> labels;
    labels.reserve(xs.size());
    for (const auto& x : xs) labels.push_back(score(x, params).predicted);
    return labels;
}

}  // namespace matlda
