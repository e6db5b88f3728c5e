#pragma once

#include "matlda/densecore.hpp"

#include <optional>
#include <stdexcept>
#include <vector>

namespace matlda {

inline double misclassification_rate(const std::vector<int>& predictions, const std::vector<int>& truth) {
    if (predictions.size() != truth.size())
        throw std::invalid_argument("misclassification_rate: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("misclassification_rate: empty input");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predictions[i] != truth[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

/// Support recovery of consecutive mean differences. A rate is empty when its
/// denominator is zero.
struct SupportRecovery {
    std::optional<double> tpr;
    std::optional<double> tnr;
    BoolMatrix d_hat_support;   // rc x (J-1)
    BoolMatrix d_star_support;  // rc x (J-1)
};

/// D(mu) = [vec(mu_1 - mu_2), ..., vec(mu_{J-1} - mu_J)].
inline Matrix consecutive_differences(const std::vector<Matrix>& mu) {
    const int J = static_cast<int>(mu.size());
    if (J < 2) throw std::invalid_argument("consecutive_differences: need at least two classes");
    Matrix d(mu[0].size(), J - 1);
    for (int j = 0; j + 1 < J; ++j) d.col(j) = vec(mu[j] - mu[j + 1]);
    return d;
}

inline SupportRecovery support_metrics(const std::vector<Matrix>& mu_hat, const std::vector<Matrix>& mu_star,
                                       double zero_tol = 1e-8) {
    if (mu_hat.size() != mu_star.size()) throw std::invalid_argument("support_metrics: class count mismatch");
    for (std::size_t j = 0; j < mu_hat.size(); ++j)
        if (mu_hat[j].rows() != mu_star[j].rows() || mu_hat[j].cols() != mu_star[j].cols())
            throw std::invalid_argument("support_metrics: dimension mismatch");
    SupportRecovery out;
    out.d_hat_support = consecutive_differences(mu_hat).array().abs() > zero_tol;
    out.d_star_support = consecutive_differences(mu_star).array().abs() > zero_tol;
    const auto positives = out.d_star_support.count();
    const auto negatives = out.d_star_support.size() - positives;
    if (positives > 0)
        out.tpr = static_cast<double>((out.d_hat_support && out.d_star_support).count()) /
                  static_cast<double>(positives);
    if (negatives > 0)
        out.tnr = static_cast<double>((!out.d_hat_support && !out.d_star_support).count()) /
                  static_cast<double>(negatives);
    return out;
}

}  // namespace matlda
