#pragma once

// The `matlda` command-line tool: simulate, fit, predict, bench.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include "matlda/bcd.hpp"
#include "matlda/classifier.hpp"
#include "matlda/io.hpp"
#include "matlda/metrics.hpp"
#include "matlda/simgen.hpp"
#include "matlda/tuning.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace matlda {

enum ExitCode { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

namespace cli_detail {

inline MeanPattern load_pattern(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error(path + ": " + e.what());
    }
    if (j.is_object()) j = j.value("classes", nlohmann::json());
    if (!j.is_array() || j.size() != 3) throw data_error(path + ": expected three 4x4 class blocks");
    MeanPattern p;
    for (int k = 0; k < 3; ++k) {
        p[k] = matrix_from_json(j[k], "pattern[" + std::to_string(k) + "]");
        if (p[k].rows() != 4 || p[k].cols() != 4) throw data_error(path + ": pattern blocks must be 4x4");
    }
    return p;
}

inline std::vector<std::pair<Eigen::Index, Eigen::Index>> parse_dims(const std::string& text) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto x = tok.find('x');
        if (x == std::string::npos) throw std::invalid_argument("--dims: expected RxC, got '" + tok + "'");
        out.emplace_back(std::stol(tok.substr(0, x)), std::stol(tok.substr(x + 1)));
    }
    if (out.empty()) throw std::invalid_argument("--dims: empty list");
    return out;
}

inline std::string fmt(double v) { return format_double(v); }

inline std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); }

inline void write_trace(const std::string& path, const FitResult& res) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write '" + path + "'");
    os << "iteration\tobjective\trho\tama_iterations\tama_converged\tmu_accepted\tglasso_delta_kkt\tglasso_phi_kkt\n";
    os << 0 << '\t' << fmt(res.objective_trace[0]) << "\tNA\tNA\tNA\tNA\tNA\tNA\n";
    for (std::size_t i = 0; i < res.inner_diagnostics.size(); ++i) {
        const auto& d = res.inner_diagnostics[i];
        os << i + 1 << '\t' << fmt(res.objective_trace[i + 1]) << '\t' << fmt(d.rho) << '\t' << d.ama_iterations
           << '\t' << d.ama_converged << '\t' << d.mu_accepted << '\t' << fmt(d.glasso_delta_kkt) << '\t'
           << fmt(d.glasso_phi_kkt) << '\n';
    }
}

inline nlohmann::json report_to_json(const TuningReport& rep, const std::string& method) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : rep.cells) {
        nlohmann::json cell = {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"failed", c.failed}};
        if (c.failed)
            cell["message"] = c.message;
        else
            cell["error"] = c.error;
        cells.push_back(std::move(cell));
    }
    return {{"method", method},
            {"chosen_lambda1", rep.chosen_lambda1},
            {"chosen_lambda2", rep.chosen_lambda2},
            {"best_error", rep.best_error},
            {"tie_count", rep.tie_count},
            {"cells", std::move(cells)}};
}

struct SimulateArgs {
    int model = 1;
    long r = 8, c = 8;
    std::uint64_t seed = 1;
    std::string out_prefix;
    std::string pattern_file;
    std::size_t n_train = 75, n_validate = 75, n_test = 1000;
};

inline int cmd_simulate(const SimulateArgs& a) {
    SimulationSpec spec;
    spec.model = static_cast<CovModel>(a.model);
    spec.r = a.r;
    spec.c = a.c;
    spec.seed = a.seed;
    spec.n_train = a.n_train;
    spec.n_validate = a.n_validate;
    spec.n_test = a.n_test;
    if (!a.pattern_file.empty()) spec.mean_pattern = load_pattern(a.pattern_file);
    const GeneratedReplicate rep = generate_replicate(spec);

    save_dataset(a.out_prefix + "_train.txt", DatasetFile::from(rep.train));
    save_dataset(a.out_prefix + "_validate.txt", DatasetFile::from(rep.validate));
    save_dataset(a.out_prefix + "_test.txt", DatasetFile::from(rep.test));

    ModelFile truth;
    if (rep.true_params) {
        truth = ModelFile::from(*rep.true_params);
    } else {
        truth.priors = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        truth.means = rep.true_means;
        truth.sigma = rep.true_sigma;
    }
    truth.extra["simulation"] = {{"model", a.model},     {"r", a.r},
                                 {"c", a.c},             {"seed", a.seed},
                                 {"row_offset", rep.row_offset}, {"col_offset", rep.col_offset}};
    save_model(a.out_prefix + "_true.json", truth);
    std::cerr << "wrote " << a.out_prefix << "_{train,validate,test}.txt and " << a.out_prefix << "_true.json\n";
    return exit_ok;
}

struct FitArgs {
    std::string train, validate, out, grid, config;
    double lambda1 = 0.0, lambda2 = 0.0;
    int cv = 0;
    std::uint64_t seed = 1;
    bool no_warm_start = false;
    unsigned threads = 0;
    // Which options were given on the command line (they override --config).
    std::map<std::string, bool> given;
};

/// Applies a JSON config under the command-line flags.
inline void apply_config(FitArgs& a, PenaltyConfig& cfg) {
    if (a.config.empty()) return;
    std::ifstream is(a.config);
    if (!is) throw data_error("cannot open '" + a.config + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error(a.config + ": " + e.what());
    }
    try {
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key) && !a.given[key]) field = j[key].get<std::decay_t<decltype(field)>>();
        };
        take("lambda1", a.lambda1);
        take("lambda2", a.lambda2);
        take("validate", a.validate);
        take("cv", a.cv);
        take("grid", a.grid);
        take("seed", a.seed);
        if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
        if (j.contains("max_outer_iter")) cfg.max_outer_iter = j["max_outer_iter"].get<int>();
        if (j.contains("mean_fuse_threshold")) cfg.mean_fuse_threshold = j["mean_fuse_threshold"].get<double>();
        if (j.contains("glasso_tol")) cfg.glasso.tol = j["glasso_tol"].get<double>();
        if (j.contains("glasso_max_iter")) cfg.glasso.max_iter = j["glasso_max_iter"].get<int>();
        if (j.contains("ama_tol")) cfg.ama.tol = j["ama_tol"].get<double>();
        if (j.contains("ama_max_iter")) cfg.ama.max_iter = j["ama_max_iter"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error(a.config + ": " + e.what());
    }
}

inline int cmd_fit(FitArgs a) {
    PenaltyConfig cfg;
    apply_config(a, cfg);
    if (!a.validate.empty() && a.cv > 0) throw std::invalid_argument("fit: --validate and --cv are exclusive");
    const LabeledMatrixDataset train = load_dataset(a.train).labeled();
    train.validate();

    double l1 = a.lambda1, l2 = a.lambda2;
    std::optional<nlohmann::json> tuning;
    if (!a.validate.empty() || a.cv > 0) {
        const auto values = a.grid.empty() ? TuningGrid::pow2_values(-12.0, 0.5, 12.0) : TuningGrid::parse_values(a.grid);
        const TuningGrid grid(values, values);
        TuningOptions topt;
        topt.warm_start = !a.no_warm_start;
        topt.threads = a.threads;
        TuningReport rep;
        if (!a.validate.empty()) {
            const LabeledMatrixDataset val = load_dataset(a.validate).labeled();
            if (val.r != train.r || val.c != train.c || val.num_classes != train.num_classes)
                throw data_error("validation data dimensions do not match the training data");
            rep = grid_search(train, val, grid, cfg, topt);
            tuning = report_to_json(rep, "validation");
        } else {
            rep = kfold_cv(train, a.cv, grid, cfg, a.seed, topt);
            tuning = report_to_json(rep, std::to_string(a.cv) + "-fold");
        }
        l1 = rep.chosen_lambda1;
        l2 = rep.chosen_lambda2;
        std::cerr << "selected lambda1=" << fmt(l1) << " lambda2=" << fmt(l2) << " (error " << fmt(rep.best_error)
                  << ", " << rep.tie_count << " tied cells)\n";
    }
    cfg.lambda1 = l1;
    cfg.lambda2 = l2;
    const FitResult res = fit(train, cfg);
    if (!res.converged)
        std::cerr << "warning: fit did not converge within " << cfg.max_outer_iter << " outer iterations\n";

    ModelFile m = ModelFile::from(res.params);
    m.fit = FitMetadata{l1, l2, res.final_objective, res.outer_iterations, res.converged};
    if (tuning) m.extra["tuning"] = *tuning;
    save_model(a.out, m);
    write_trace(a.out + ".trace.tsv", res);
    return exit_ok;
}

struct PredictArgs {
    std::string model, data, out;
};

inline int cmd_predict(const PredictArgs& a) {
    const ModelParameters params = load_model(a.model).parameters();
    const DatasetFile d = load_dataset(a.data);
    if (d.r != params.r() || d.c != params.c())
        throw data_error("data is " + std::to_string(d.r) + "x" + std::to_string(d.c) + " but the model is " +
                         std::to_string(params.r()) + "x" + std::to_string(params.c()));
    const int J = params.num_classes();
    std::ofstream os(a.out, std::ios::binary);
    if (!os) throw data_error("cannot write '" + a.out + "'");
    os << "index,true,predicted";
    for (int j = 1; j <= J; ++j) os << ",score_" << j;
    os << '\n';
    std::vector<int> pred, truth;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const DiscriminantScores s = score(d.x[i], params);
        os << i + 1 << ',' << (d.labels[i] ? std::to_string(*d.labels[i]) : std::string("NA")) << ',' << s.predicted;
        for (int j = 0; j < J; ++j) os << ',' << fmt(s.scores[j]);
        os << '\n';
        pred.push_back(s.predicted);
        if (d.labels[i]) truth.push_back(*d.labels[i]);
    }
    if (!d.x.empty() && d.fully_labeled())
        std::cout << "misclassification_rate\t" << fmt(misclassification_rate(pred, truth)) << '\n';
    else if (truth.size() > 0)
        std::cerr << "warning: some observations are unlabeled; no rate reported\n";
    return exit_ok;
}

struct BenchArgs {
    int model = 1;
    std::string dims = "8x8";
    int reps = 2;
    std::uint64_t seed = 1;
    std::string out;
    std::string grid;
    unsigned threads = 0;
};

struct BenchRow {
    std::string method;
    Eigen::Index r = 0, c = 0;
    int rep = 0;
    double miscls = 0.0;
    std::optional<double> tpr, tnr;
};

/// One replicate: validation-tuned penalized fit and the lambda = 0 MLE.
inline std::vector<BenchRow> bench_replicate(CovModel model, Eigen::Index r, Eigen::Index c, int rep,
                                             std::uint64_t seed, const TuningGrid& grid) {
    SimulationSpec spec;
    spec.model = model;
    spec.r = r;
    spec.c = c;
    spec.seed = seed;
    const GeneratedReplicate data = generate_replicate(spec);
    TuningOptions topt;
    topt.threads = 1;
    const TuningReport tr = grid_search(data.train, data.validate, grid, PenaltyConfig{}, topt);

    std::vector<BenchRow> rows;
    auto evaluate = [&](const std::string& method, double l1, double l2) {
        PenaltyConfig cfg;
        cfg.lambda1 = l1;
        cfg.lambda2 = l2;
        const FitResult res = fit(data.train, cfg);
        const SupportRecovery sr = support_metrics(res.params.means, data.true_means);
        BenchRow row{method, r, c, rep, misclassification_rate(predict_batch(data.test.x, res.params), data.test.y),
                     sr.tpr, sr.tnr};
        if (row.tpr) *row.tpr *= 100.0;
        if (row.tnr) *row.tnr *= 100.0;
        rows.push_back(row);
    };
    evaluate("PMN", tr.chosen_lambda1, tr.chosen_lambda2);
    evaluate("MLE", 0.0, 0.0);
    return rows;
}

inline int cmd_bench(const BenchArgs& a) {
    if (a.model < 1 || a.model > 4) throw std::invalid_argument("bench: --model must be 1..4");
    if (a.reps < 1) throw std::invalid_argument("bench: --reps must be positive");
    const auto dims = parse_dims(a.dims);
    const auto values = a.grid.empty() ? TuningGrid::pow2_values(-12.0, 0.5, 12.0) : TuningGrid::parse_values(a.grid);
    const TuningGrid grid(values, values);

    struct Job {
        Eigen::Index r, c;
        int rep;
        std::vector<BenchRow> rows;
        std::string error;
    };
    std::vector<Job> jobs;
    for (const auto& [r, c] : dims)
        for (int k = 0; k < a.reps; ++k) jobs.push_back({r, c, k + 1, {}, {}});
    parallel_for(jobs.size(), a.threads, [&](std::size_t i) {
        Job& job = jobs[i];
        const std::uint64_t seed = derive_seed(derive_seed(a.seed, static_cast<std::uint64_t>(job.r * 100000 + job.c)),
                                               static_cast<std::uint64_t>(job.rep));
        try {
            job.rows = bench_replicate(static_cast<CovModel>(a.model), job.r, job.c, job.rep, seed, grid);
        } catch (const std::exception& e) {
            job.error = e.what();
        }
    });

    std::ofstream os(a.out, std::ios::binary);
    if (!os) throw data_error("cannot write '" + a.out + "'");
    os << "method\tr\tc\trep\tmiscls\ttpr\ttnr\n";
    std::size_t failures = 0;
    for (const auto& job : jobs) {
        if (!job.error.empty()) {
            ++failures;
            std::cerr << "replicate " << job.r << "x" << job.c << " #" << job.rep << " failed: " << job.error << '\n';
            continue;
        }
        for (const auto& row : job.rows)
            os << row.method << '\t' << row.r << '\t' << row.c << '\t' << row.rep << '\t' << fmt(row.miscls) << '\t'
               << fmt_opt(row.tpr) << '\t' << fmt_opt(row.tnr) << '\n';
    }
    // Aggregate footer: means over successful replicates.
    for (const auto& [r, c] : dims)
        for (const std::string method : {"PMN", "MLE"}) {
            double m = 0.0, tp = 0.0, tn = 0.0;
            int n = 0, ntp = 0, ntn = 0;
            for (const auto& job : jobs)
                if (job.r == r && job.c == c)
                    for (const auto& row : job.rows)
                        if (row.method == method) {
                            m += row.miscls;
                            ++n;
                            if (row.tpr) tp += *row.tpr, ++ntp;
                            if (row.tnr) tn += *row.tnr, ++ntn;
                        }
            auto avg = [](double s, int k) { return k ? std::optional<double>(s / k) : std::nullopt; };
            os << method << '\t' << r << '\t' << c << "\tmean\t" << fmt_opt(avg(m, n)) << '\t' << fmt_opt(avg(tp, ntp))
               << '\t' << fmt_opt(avg(tn, ntn)) << '\n';
        }
    if (failures * 10 > jobs.size()) {
        std::cerr << "error: " << failures << " of " << jobs.size() << " replicates failed\n";
        return exit_numeric;
    }
    return exit_ok;
}

}  // namespace cli_detail

inline int run_cli(int argc, char** argv) {
    using namespace cli_detail;
    CLI::App app{"Penalized matrix-normal discriminant analysis"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Generate a simulated train/validate/test replicate");
    s->add_option("--model", sim.model, "Covariance model 1..4")->required()->check(CLI::Range(1, 4));
    s->add_option("--r", sim.r, "Rows")->required();
    s->add_option("--c", sim.c, "Columns")->required();
    s->add_option("--seed", sim.seed, "Random seed")->required();
    s->add_option("--out-prefix", sim.out_prefix, "Output prefix")->required();
    s->add_option("--pattern-file", sim.pattern_file, "JSON with three 4x4 mean blocks");
    s->add_option("--n-train", sim.n_train);
    s->add_option("--n-validate", sim.n_validate);
    s->add_option("--n-test", sim.n_test);

    FitArgs fa;
    auto* f = app.add_subcommand("fit", "Fit the penalized model");
    f->add_option("--train", fa.train, "Training dataset")->required();
    auto* o_l1 = f->add_option("--lambda1", fa.lambda1, "Mean fusion penalty");
    auto* o_l2 = f->add_option("--lambda2", fa.lambda2, "Precision penalty");
    auto* o_val = f->add_option("--validate", fa.validate, "Validation dataset for tuning");
    auto* o_cv = f->add_option("--cv", fa.cv, "k-fold cross-validation for tuning");
    auto* o_grid = f->add_option("--grid", fa.grid, "Grid: pow2:LO:STEP:HI or comma list");
    auto* o_seed = f->add_option("--seed", fa.seed, "Fold seed");
    f->add_option("--out", fa.out, "Output model file")->required();
    f->add_option("--config", fa.config, "JSON config (flags take precedence)");
    f->add_flag("--no-warm-start", fa.no_warm_start);
    f->add_option("--threads", fa.threads);

    PredictArgs pa;
    auto* p = app.add_subcommand("predict", "Classify observations");
    p->add_option("--model", pa.model)->required();
    p->add_option("--data", pa.data)->required();
    p->add_option("--out", pa.out)->required();

    BenchArgs ba;
    auto* b = app.add_subcommand("bench", "Replication study table");
    b->add_option("--model", ba.model)->required()->check(CLI::Range(1, 4));
    b->add_option("--dims", ba.dims, "Comma list of RxC")->required();
    b->add_option("--reps", ba.reps)->required();
    b->add_option("--seed", ba.seed)->required();
    b->add_option("--out", ba.out)->required();
    b->add_option("--grid", ba.grid);
    b->add_option("--threads", ba.threads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*f) {
            fa.given = {{"lambda1", o_l1->count() > 0}, {"lambda2", o_l2->count() > 0},
                        {"validate", o_val->count() > 0}, {"cv", o_cv->count() > 0},
                        {"grid", o_grid->count() > 0},    {"seed", o_seed->count() > 0}};
            return cmd_fit(fa);
        }
        if (*p) return cmd_predict(pa);
        if (*b) return cmd_bench(ba);
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    return exit_usage;
}

}  // namespace matlda
