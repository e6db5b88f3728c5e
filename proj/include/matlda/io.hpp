#pragma once

// Text dataset format and JSON model files.
//
// Dataset:
//   KLDA1 n r c J
//   <label|NA> x_11 x_12 ... x_1c x_21 ... x_rc      (one line per observation)

#include "matlda/densecore.hpp"
#include "matlda/matnorm.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace matlda {

inline constexpr const char* software_version = "0.1.0";

/// Observations whose labels may be missing ("NA").
struct DatasetFile {
    Eigen::Index r = 0;
    Eigen::Index c = 0;
    int num_classes = 0;
    std::vector<Matrix> x;
    std::vector<std::optional<int>> labels;

    bool fully_labeled() const {
        for (const auto& l : labels)
            if (!l) return false;
        return true;
    }

    LabeledMatrixDataset labeled() const {
        LabeledMatrixDataset d{r, c, num_classes, x, {}};
        d.y.reserve(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!labels[i]) throw data_error("dataset: observation " + std::to_string(i + 1) + " is unlabeled");
            d.y.push_back(*labels[i]);
        }
        return d;
    }

    static DatasetFile from(const LabeledMatrixDataset& d) {
        DatasetFile f{d.r, d.c, d.num_classes, d.x, {}};
        for (int y : d.y) f.labels.emplace_back(y);
        return f;
    }
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_dataset(std::ostream& os, const DatasetFile& d) {
    os << "KLDA1 " << d.x.size() << ' ' << d.r << ' ' << d.c << ' ' << d.num_classes << '\n';
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        os << (d.labels[i] ? std::to_string(*d.labels[i]) : std::string("NA"));
        for (Eigen::Index a = 0; a < d.r; ++a)
            for (Eigen::Index b = 0; b < d.c; ++b) os << ' ' << format_double(d.x[i](a, b));
        os << '\n';
    }
}

namespace detail {

// Whitespace tokenizer that remembers the line of the last token.
class Tokens {
public:
    explicit Tokens(std::istream& is) : is_(is) {}

    std::optional<std::string> next() {
        for (;;) {
            while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
            if (pos_ < line_.size()) {
                const std::size_t start = pos_;
                while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
                token_line_ = line_no_;
                return line_.substr(start, pos_ - start);
            }
            if (!std::getline(is_, line_)) return std::nullopt;
            ++line_no_;
            pos_ = 0;
        }
    }

    std::size_t line() const { return token_line_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw data_error("line " + std::to_string(token_line_) + ": " + msg);
    }

private:
    std::istream& is_;
    std::string line_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
    std::size_t token_line_ = 0;
};

inline long long parse_count(Tokens& t, const char* what) {
    const auto tok = t.next();
    if (!tok) t.fail(std::string("missing ") + what + " in header");
    try {
        std::size_t used = 0;
        const long long v = std::stoll(*tok, &used);
        if (used != tok->size() || v < 0) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        t.fail(std::string("invalid ") + what + " '" + *tok + "'");
    }
}

}  // namespace detail

inline DatasetFile read_dataset(std::istream& is) {
    detail::Tokens t(is);
    const auto magic = t.next();
    if (!magic || *magic != "KLDA1") throw data_error("line 1: expected magic 'KLDA1'");
    const long long n = detail::parse_count(t, "n");
    const long long r = detail::parse_count(t, "r");
    const long long c = detail::parse_count(t, "c");
    const long long J = detail::parse_count(t, "J");
    if (r < 1 || c < 1 || J < 1) t.fail("r, c and J must be positive");

    DatasetFile d;
    d.r = r;
    d.c = c;
    d.num_classes = static_cast<int>(J);
    d.x.reserve(static_cast<std::size_t>(n));
    d.labels.reserve(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
        const auto lab = t.next();
        if (!lab) throw data_error("dataset: expected " + std::to_string(n) + " observations, found " + std::to_string(i));
        if (*lab == "NA") {
            d.labels.emplace_back();
        } else {
            int y = 0;
            try {
                std::size_t used = 0;
                y = std::stoi(*lab, &used);
                if (used != lab->size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                t.fail("invalid label '" + *lab + "'");
            }
            if (y < 1 || y > J) t.fail("label " + std::to_string(y) + " outside 1.." + std::to_string(J));
            d.labels.emplace_back(y);
        }
        Matrix m(r, c);
        for (Eigen::Index a = 0; a < r; ++a)
            for (Eigen::Index b = 0; b < c; ++b) {
                const auto tok = t.next();
                if (!tok) throw data_error("dataset: observation " + std::to_string(i + 1) + " is truncated");
                double v = 0.0;
                try {
                    std::size_t used = 0;
                    v = std::stod(*tok, &used);
                    if (used != tok->size()) throw std::invalid_argument("");
                } catch (const std::exception&) {
                    t.fail("cannot parse value '" + *tok + "'");
                }
                if (!std::isfinite(v)) t.fail("non-finite value '" + *tok + "'");
                m(a, b) = v;
            }
        d.x.push_back(std::move(m));
    }
    if (t.next()) t.fail("more observations than the header declares");
    return d;
}

inline DatasetFile load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot open '" + path + "'");
    try {
        return read_dataset(is);
    } catch (const data_error& e) {
        throw data_error(path + ": " + e.what());
    }
}

inline void save_dataset(const std::string& path, const DatasetFile& d) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write '" + path + "'");
    write_dataset(os, d);
}

struct FitMetadata {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Contents of a model file. Fitted models carry phi/delta; simulation truths
/// for non-Kronecker designs carry sigma instead.
struct ModelFile {
    std::vector<double> priors;
    std::vector<Matrix> means;
    std::optional<SymMatrix> phi;
    std::optional<SymMatrix> delta;
    std::optional<SymMatrix> sigma;
    std::optional<FitMetadata> fit;
    nlohmann::json extra = nlohmann::json::object();

    ModelParameters parameters() const {
        if (!phi || !delta) throw data_error("model file has no phi/delta precision factors");
        return ModelParameters{priors, means, *phi, *delta};
    }

    static ModelFile from(const ModelParameters& p) { return ModelFile{p.priors, p.means, p.phi, p.delta, {}, {}, {}}; }
};

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index b = 0; b < m.cols(); ++b) row.push_back(m(a, b));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw data_error("model: '" + what + "' is not a matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index a = 0; a < rows; ++a) {
        if (!j[a].is_array() || static_cast<Eigen::Index>(j[a].size()) != cols)
            throw data_error("model: '" + what + "' has ragged rows");
        for (Eigen::Index b = 0; b < cols; ++b) {
            if (!j[a][b].is_number()) throw data_error("model: '" + what + "' has a non-numeric entry");
            m(a, b) = j[a][b].get<double>();
        }
    }
    if (!m.allFinite()) throw data_error("model: '" + what + "' has a non-finite entry");
    return m;
}

inline nlohmann::json model_to_json(const ModelFile& m) {
    nlohmann::json j;
    j["format"] = "matlda-model";
    j["software_version"] = software_version;
    j["priors"] = m.priors;
    nlohmann::json means = nlohmann::json::array();
    for (const auto& mu : m.means) means.push_back(matrix_to_json(mu));
    j["means"] = std::move(means);
    if (m.phi) j["phi"] = matrix_to_json(m.phi->mat());
    if (m.delta) j["delta"] = matrix_to_json(m.delta->mat());
    if (m.sigma) j["sigma"] = matrix_to_json(m.sigma->mat());
    if (m.fit)
        j["fit"] = {{"lambda1", m.fit->lambda1},     {"lambda2", m.fit->lambda2},
                    {"objective", m.fit->objective}, {"iterations", m.fit->iterations},
                    {"converged", m.fit->converged}};
    for (const auto& [k, v] : m.extra.items()) j[k] = v;
    return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "matlda-model") throw data_error("model: not a matlda model file");
    ModelFile m;
    try {
        m.priors = j.at("priors").get<std::vector<double>>();
        for (std::size_t k = 0; k < j.at("means").size(); ++k)
            m.means.push_back(matrix_from_json(j["means"][k], "means[" + std::to_string(k) + "]"));
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("model: ") + e.what());
    }
    if (m.priors.size() != m.means.size() || m.means.empty())
        throw data_error("model: priors and means disagree on the number of classes");
    for (const auto& mu : m.means)
        if (mu.rows() != m.means[0].rows() || mu.cols() != m.means[0].cols())
            throw data_error("model: class means have different dimensions");
    auto sym = [&](const char* key) -> std::optional<SymMatrix> {
        if (!j.contains(key)) return std::nullopt;
        const Matrix a = matrix_from_json(j[key], key);
        if (a.rows() != a.cols()) throw data_error(std::string("model: '") + key + "' is not square");
        return SymMatrix(a);
    };
    m.phi = sym("phi");
    m.delta = sym("delta");
    m.sigma = sym("sigma");
    if (m.phi && m.phi->dim() != m.means[0].rows()) throw data_error("model: phi does not match the mean rows");
    if (m.delta && m.delta->dim() != m.means[0].cols()) throw data_error("model: delta does not match the mean columns");
    if (j.contains("fit")) {
        const auto& f = j["fit"];
        try {
            m.fit = FitMetadata{f.at("lambda1").get<double>(), f.at("lambda2").get<double>(),
                                f.at("objective").get<double>(), f.at("iterations").get<int>(),
                                f.at("converged").get<bool>()};
        } catch (const nlohmann::json::exception& e) {
            throw data_error(std::string("model: fit metadata: ") + e.what());
        }
    }
    for (const auto& [k, v] : j.items())
        if (k != "format" && k != "software_version" && k != "priors" && k != "means" && k != "phi" &&
            k != "delta" && k != "sigma" && k != "fit")
            m.extra[k] = v;
    return m;
}

inline void save_model(const std::string& path, const ModelFile& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write '" + path + "'");
    os << model_to_json(m).dump(2) << '\n';
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error(path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace matlda
