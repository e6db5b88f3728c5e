#pragma once

// Tuning-parameter selection over a (lambda1, lambda2) grid, by validation-set
// misclassification or k-fold cross-validation.

#include "matlda/bcd.hpp"
#include "matlda/classifier.hpp"
#include "matlda/metrics.hpp"
#include "matlda/random.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace matlda {

struct TuningGrid {
    std::vector<double> lambda1_values;
    std::vector<double> lambda2_values;

    static std::vector<double> normalized(std::vector<double> v) {
        for (double x : v)
            if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("grid: values must be finite and >= 0");
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    }

    TuningGrid() = default;
    TuningGrid(std::vector<double> l1, std::vector<double> l2)
        : lambda1_values(normalized(std::move(l1))), lambda2_values(normalized(std::move(l2))) {}

    /// {2^x : x = lo, lo + step, ..., hi}.
    static std::vector<double> pow2_values(double lo, double step, double hi) {
        if (!(step > 0.0) || hi < lo) throw std::invalid_argument("grid: bad pow2 range");
        std::vector<double> v;
        const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
        for (long k = 0; k < count; ++k) v.push_back(std::exp2(lo + static_cast<double>(k) * step));
        return v;
    }

    /// Parses "pow2:LO:STEP:HI" or a comma-separated list of values.
    static std::vector<double> parse_values(const std::string& text) {
        if (text.rfind("pow2:", 0) == 0) {
            std::vector<double> parts;
            std::stringstream ss(text.substr(5));
            std::string tok;
            while (std::getline(ss, tok, ':')) parts.push_back(std::stod(tok));
            if (parts.size() != 3) throw std::invalid_argument("grid: expected pow2:LO:STEP:HI");
            return normalized(pow2_values(parts[0], parts[1], parts[2]));
        }
        std::vector<double> v;
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            std::size_t used = 0;
            const double x = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument("grid: cannot parse '" + tok + "'");
            v.push_back(x);
        }
        if (v.empty()) throw std::invalid_argument("grid: no values");
        return normalized(v);
    }

    static TuningGrid paper_default() {
        const auto v = pow2_values(-12.0, 0.5, 12.0);
        return TuningGrid(v, v);
    }
};

struct TuningCell {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double error = 0.0;
    bool failed = false;
    std::string message;
};

struct TuningReport {
    std::vector<TuningCell> cells;  // row-major in (lambda1, lambda2), ascending
    double chosen_lambda1 = 0.0;
    double chosen_lambda2 = 0.0;
    double best_error = 0.0;
    int tie_count = 0;  // cells attaining the minimum
};

struct TuningOptions {
    bool warm_start = true;
    unsigned threads = 0;  // 0: MATLDA_THREADS or hardware concurrency
};

inline unsigned resolve_thread_count(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MATLDA_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, n) over a pool; results are written by index so
/// the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& job) {
    threads = std::min<unsigned>(resolve_thread_count(threads), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lock(m);
                    if (next >= n) return;
                    i = next++;
                }
                job(i);
            }
        });
    for (auto& th : pool) th.join();
}

/// Picks the minimum-error cell; ties go to the larger lambda1, then the larger lambda2.
inline void choose_cell(TuningReport& rep) {
    const TuningCell* best = nullptr;
    for (const auto& cell : rep.cells) {
        if (cell.failed) continue;
        if (!best || cell.error < best->error ||
            (cell.error == best->error &&
             (cell.lambda1 > best->lambda1 || (cell.lambda1 == best->lambda1 && cell.lambda2 > best->lambda2))))
            best = &cell;
    }
    if (!best) throw numeric_error("tuning: every grid cell failed");
    rep.chosen_lambda1 = best->lambda1;
    rep.chosen_lambda2 = best->lambda2;
    rep.best_error = best->error;
    rep.tie_count = static_cast<int>(std::count_if(rep.cells.begin(), rep.cells.end(), [&](const TuningCell& c) {
        return !c.failed && c.error == best->error;
    }));
}

namespace detail {

// Fits one lambda1 row along descending lambda2, warm-starting each cell from
// the previous one, and returns the per-cell errors from `evaluate`.
inline void run_row(const LabeledMatrixDataset& train, double lambda1, const std::vector<double>& lambda2_desc,
                    const PenaltyConfig& base, bool warm, const FusionWeights& weights,
                    const std::function<double(const ModelParameters&)>& evaluate, std::vector<TuningCell>& out) {
    std::optional<WarmStart> ws;
    for (std::size_t k = 0; k < lambda2_desc.size(); ++k) {
        TuningCell& cell = out[k];
        cell.lambda1 = lambda1;
        cell.lambda2 = lambda2_desc[k];
        PenaltyConfig cfg = base;
        cfg.lambda1 = lambda1;
        cfg.lambda2 = lambda2_desc[k];
        FitOptions opts;
        opts.weights = weights;
        if (warm) opts.warm_start = ws;
        try {
            const FitResult res = fit(train, cfg, opts);
            cell.error = evaluate(res.params);
            if (warm) ws = warm_start_from(res);
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.message = e.what();
            ws.reset();
        }
    }
}

}  // namespace detail

inline TuningReport grid_search(const LabeledMatrixDataset& train, const LabeledMatrixDataset& validate,
                                const TuningGrid& grid, const PenaltyConfig& fit_cfg, const TuningOptions& opt = {}) {
    if (grid.lambda1_values.empty() || grid.lambda2_values.empty()) throw std::invalid_argument("grid_search: empty grid");
    if (train.size() == 0 || validate.size() == 0) throw std::invalid_argument("grid_search: empty dataset");
    const TuningGrid g(grid.lambda1_values, grid.lambda2_values);
    const std::size_t n1 = g.lambda1_values.size(), n2 = g.lambda2_values.size();
    const std::vector<double> l2_desc(g.lambda2_values.rbegin(), g.lambda2_values.rend());
    const FusionWeights weights = compute_weights(class_counts_and_means(train).means);

    auto evaluate = [&](const ModelParameters& p) { return misclassification_rate(predict_batch(validate.x, p), validate.y); };
    std::vector<std::vector<TuningCell>> rows(n1, std::vector<TuningCell>(n2));
    parallel_for(n1, opt.threads, [&](std::size_t i) {
        detail::run_row(train, g.lambda1_values[i], l2_desc, fit_cfg, opt.warm_start, weights, evaluate, rows[i]);
    });

    TuningReport rep;
    for (auto& row : rows)
        for (auto it = row.rbegin(); it != row.rend(); ++it) rep.cells.push_back(*it);
    choose_cell(rep);
    return rep;
}

/// Fold id per observation. Stratified by class (round-robin within each
/// shuffled class, continuing the fold counter across classes) unless some
/// class has fewer than k members.
inline std::vector<int> make_folds(const std::vector<int>& labels, int num_classes, int k, std::uint64_t seed,
                                   bool* stratified = nullptr) {
    const std::size_t n = labels.size();
    if (k < 2) throw std::invalid_argument("kfold: k must be at least 2");
    if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("kfold: fewer observations than folds");
    Rng rng(seed);
    auto shuffle = [&](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i] - 1].push_back(i);
    bool strat = true;
    for (const auto& cls : by_class)
        if (cls.size() < static_cast<std::size_t>(k)) strat = false;
    if (stratified) *stratified = strat;

    std::vector<int> fold(n, 0);
    std::size_t counter = 0;
    if (strat) {
        for (auto& cls : by_class) {
            shuffle(cls);
            for (auto i : cls) fold[i] = static_cast<int>(counter++ % k);
        }
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        shuffle(all);
        for (auto i : all) fold[i] = static_cast<int>(counter++ % k);
    }
    return fold;
}

inline TuningReport kfold_cv(const LabeledMatrixDataset& data, int k, const TuningGrid& grid,
                             const PenaltyConfig& fit_cfg, std::uint64_t seed, const TuningOptions& opt = {}) {
    if (grid.lambda1_values.empty() || grid.lambda2_values.empty()) throw std::invalid_argument("kfold_cv: empty grid");
    bool stratified = true;
    const std::vector<int> fold = make_folds(data.y, data.num_classes, k, seed, &stratified);
    if (!stratified)
        std::cerr << "warning: a class has fewer than " << k << " members; using unstratified folds\n";

    const TuningGrid g(grid.lambda1_values, grid.lambda2_values);
    const std::size_t n1 = g.lambda1_values.size(), n2 = g.lambda2_values.size();
    const std::vector<double> l2_desc(g.lambda2_values.rbegin(), g.lambda2_values.rend());

    // fold_cells[f][i][k2]
    std::vector<std::vector<std::vector<TuningCell>>> fold_cells(
        k, std::vector<std::vector<TuningCell>>(n1, std::vector<TuningCell>(n2)));
    parallel_for(static_cast<std::size_t>(k) * n1, opt.threads, [&](std::size_t job) {
        const int f = static_cast<int>(job / n1);
        const std::size_t i = job % n1;
        std::vector<std::size_t> tr, te;
        for (std::size_t q = 0; q < data.size(); ++q) (fold[q] == f ? te : tr).push_back(q);
        const LabeledMatrixDataset train = data.subset(tr);
        const LabeledMatrixDataset test = data.subset(te);
        auto& cells = fold_cells[f][i];
        FusionWeights weights;
        try {
            weights = compute_weights(class_counts_and_means(train).means);
        } catch (const std::exception& e) {
            for (std::size_t q = 0; q < n2; ++q) cells[q] = {g.lambda1_values[i], l2_desc[q], 0.0, true, e.what()};
            return;
        }
        auto evaluate = [&](const ModelParameters& p) { return misclassification_rate(predict_batch(test.x, p), test.y); };
        detail::run_row(train, g.lambda1_values[i], l2_desc, fit_cfg, opt.warm_start, weights, evaluate, cells);
    });

    TuningReport rep;
    for (std::size_t i = 0; i < n1; ++i) {
        for (std::size_t q = n2; q-- > 0;) {
            TuningCell cell{g.lambda1_values[i], l2_desc[q], 0.0, false, {}};
            int ok = 0;
            for (int f = 0; f < k; ++f) {
                const auto& fc = fold_cells[f][i][q];
                if (fc.failed) {
                    cell.message = fc.message;
                    continue;
                }
                cell.error += fc.error;
                ++ok;
            }
            if (ok == 0)
                cell.failed = true;
            else
                cell.error /= ok;
            rep.cells.push_back(cell);
        }
    }
    choose_cell(rep);
    return rep;
}

}  // namespace matlda
