#pragma once

// File formats and result persistence: dataset CSV (header row, 17
// significant digits for reals, integer responses), model and results JSON,
// and the plain-text tables the CLI prints. Results JSON carries full
// provenance (seed, options, tool version) and round-trips losslessly.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coarsemom/datagen.hpp"
#include "coarsemom/latent.hpp"
#include "coarsemom/post.hpp"

namespace coarsemom {

inline constexpr const char* kToolName = "coarsemom";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kResultsSchema = 1;

using nlohmann::json;

// ---------------------------------------------------------------------------
// small JSON/Eigen helpers

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (long r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const long rows = static_cast<long>(j.size());
    const long cols = rows == 0 ? 0 : static_cast<long>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (long r = 0; r < v.size(); ++r) out.push_back(v[r]);
    return out;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<long>(j.size()));
    for (long r = 0; r < v.size(); ++r) v[r] = j.at(static_cast<std::size_t>(r)).get<double>();
    return v;
}

// ---------------------------------------------------------------------------
// dataset CSV

inline std::string format_real(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

inline void write_dataset_csv(const std::string& path, const std::vector<std::string>& response_names,
                              const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t k = 0; k < response_names.size(); ++k) {
        if (k) out << ',';
        out << response_names[k];
    }
    for (const auto& name : data.regressor_names) out << ',' << name;
    out << '\n';
    for (long i = 0; i < data.n_obs(); ++i) {
        for (long k = 0; k < data.responses.cols(); ++k) {
            if (k) out << ',';
            out << data.responses(i, k);
        }
        for (long c = 0; c < data.regressors.cols(); ++c) out << ',' << format_real(data.regressors(i, c));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_latent_csv(const std::string& path, const std::vector<std::string>& response_names,
                             const Eigen::MatrixXd& latent, const Eigen::MatrixXd& errors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t k = 0; k < response_names.size(); ++k) {
        if (k) out << ',';
        out << "ystar_" << response_names[k];
    }
    for (std::size_t k = 0; k < response_names.size(); ++k) out << ",eps_" << response_names[k];
    out << '\n';
    for (long i = 0; i < latent.rows(); ++i) {
        for (long k = 0; k < latent.cols(); ++k) {
            if (k) out << ',';
            out << format_real(latent(i, k));
        }
        for (long k = 0; k < errors.cols(); ++k) out << ',' << format_real(errors(i, k));
        out << '\n';
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

// Reads a dataset for a given model: the model's response names select the
// integer response columns, every other column is a regressor.
inline Dataset read_dataset_csv(const std::string& path, const ModelSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);

    std::vector<int> response_col(spec.equations.size(), -1);
    std::vector<int> regressor_cols;
    std::vector<std::string> regressor_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        bool is_response = false;
        for (std::size_t k = 0; k < spec.equations.size(); ++k) {
            if (header[c] == spec.equations[k].response_name) {
                response_col[k] = static_cast<int>(c);
                is_response = true;
            }
        }
        if (!is_response) {
            regressor_cols.push_back(static_cast<int>(c));
            regressor_names.push_back(header[c]);
        }
    }
    for (std::size_t k = 0; k < spec.equations.size(); ++k)
        if (response_col[k] < 0)
            throw std::runtime_error(path + ": missing response column " +
                                     spec.equations[k].response_name);

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
        if (rows.back().size() != header.size())
            throw std::runtime_error(path + ": row " + std::to_string(rows.size()) + " has " +
                                     std::to_string(rows.back().size()) + " fields, header has " +
                                     std::to_string(header.size()));
    }

    Dataset data;
    data.regressor_names = regressor_names;
    const long n = static_cast<long>(rows.size());
    data.regressors.resize(n, static_cast<long>(regressor_cols.size()));
    data.responses.resize(n, static_cast<long>(spec.equations.size()));
    for (long i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < spec.equations.size(); ++k)
            data.responses(i, static_cast<long>(k)) =
                std::stoi(row[static_cast<std::size_t>(response_col[k])]);
        for (std::size_t c = 0; c < regressor_cols.size(); ++c)
            data.regressors(i, static_cast<long>(c)) =
                std::stod(row[static_cast<std::size_t>(regressor_cols[c])]);
    }
    return data;
}

// ---------------------------------------------------------------------------
// model JSON

inline ModelSpec model_from_json(const json& j) {
    ModelSpec spec;
    for (const auto& eq : j.at("equations")) {
        EquationSpec e;
        e.response_name = eq.at("response").get<std::string>();
        for (const auto& r : eq.at("regressors")) e.regressor_names.push_back(r.get<std::string>());
        e.n_categories = eq.at("categories").get<int>();
        spec.equations.push_back(std::move(e));
    }
    if (j.contains("ties")) {
        for (const auto& group : j.at("ties")) {
            TieGroup tie;
            for (const auto& member : group)
                tie.emplace_back(member.at(0).get<int>(), member.at(1).get<std::string>());
            spec.ties.push_back(std::move(tie));
        }
    }
    return spec;
}

inline json model_to_json(const ModelSpec& spec) {
    json j;
    j["equations"] = json::array();
    for (const auto& eq : spec.equations)
        j["equations"].push_back(
            {{"response", eq.response_name}, {"regressors", eq.regressor_names}, {"categories", eq.n_categories}});
    json ties = json::array();
    for (const auto& group : spec.ties) {
        json g = json::array();
        for (const auto& [k, name] : group) g.push_back(json::array({k, name}));
        ties.push_back(std::move(g));
    }
    j["ties"] = std::move(ties);
    return j;
}

inline ModelSpec read_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------
// DGP config JSON

inline DgpConfig dgp_config_from_json(const json& j) {
    DgpConfig cfg;
    for (const auto& col : j.at("columns")) {
        ColumnSpec c;
        c.name = col.at("name").get<std::string>();
        const std::string kind = col.at("kind").get<std::string>();
        if (kind == "normal") {
            c.kind = ColumnSpec::Kind::Normal;
            c.sd = col.value("sd", 1.0);
        } else if (kind == "discrete") {
            c.kind = ColumnSpec::Kind::Discrete;
            for (const auto& v : col.at("values")) c.values.push_back(v.get<double>());
        } else if (kind == "combo") {
            c.kind = ColumnSpec::Kind::Combo;
            const auto& weights = col.at("weights");
            if (weights.is_object()) {
                for (auto it = weights.begin(); it != weights.end(); ++it)
                    c.weights.emplace_back(it.key(), it.value().get<double>());
            } else {
                for (const auto& w : weights)
                    c.weights.emplace_back(w.at(0).get<std::string>(), w.at(1).get<double>());
            }
            c.sd = col.value("noise_sd", 0.0);
        } else {
            throw std::runtime_error("unknown column kind: " + kind);
        }
        c.hidden = col.value("hidden", false);
        cfg.columns.push_back(std::move(c));
    }
    for (const auto& eq : j.at("equations")) {
        DgpEquation e;
        e.response_name = eq.at("response").get<std::string>();
        for (const auto& r : eq.at("regressors")) e.regressor_names.push_back(r.get<std::string>());
        e.coefficients = vector_from_json(eq.at("coefficients"));
        e.cutpoints = vector_from_json(eq.at("cutpoints"));
        if (e.coefficients.size() != static_cast<long>(e.regressor_names.size()))
            throw std::runtime_error("equation " + e.response_name +
                                     ": coefficients and regressors differ in length");
        cfg.equations.push_back(std::move(e));
    }
    cfg.sigma = matrix_from_json(j.at("sigma"));
    return cfg;
}

inline DgpConfig read_dgp_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return dgp_config_from_json(j);
}

// ---------------------------------------------------------------------------
// results document

struct ResultsDocument {
    ModelSpec model;
    json options;  // echo of the run configuration (seed, tolerances, flags)
    long n_obs = 0;

    std::vector<std::string> labels;
    Eigen::VectorXd estimates, se, z;
    Eigen::VectorXd first_stage_estimates;
    Eigen::MatrixXd sandwich_cov;
    Eigen::MatrixXd between_cov;
    bool converged = false;
    int n_iterations = 0;
    double moment_norm = 0.0;

    Eigen::MatrixXd latent_correlation;
    json latent_pairs = json::array();
    double latent_min_eigenvalue = 0.0;
    bool latent_psd = true;

    Eigen::MatrixXd polychoric_corr;
    Eigen::MatrixXd polychoric_sigma;
    Eigen::MatrixXd polychoric_structural;
    Eigen::VectorXd r2;
    Eigen::VectorXd exact_se;  // aligned with the coefficient block
    Eigen::MatrixXd pearson;   // may be 0x0 when not computed

    double seconds_first_stage = 0.0;
    double seconds_second_stage = 0.0;
    double seconds_sandwich = 0.0;
    double seconds_latent = 0.0;
};

inline json results_to_json(const ResultsDocument& doc) {
    json j;
    j["schema"] = kResultsSchema;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    j["model"] = model_to_json(doc.model);
    j["options"] = doc.options;
    j["n_obs"] = doc.n_obs;

    json params = json::array();
    for (long r = 0; r < doc.estimates.size(); ++r) {
        json p;
        p["name"] = doc.labels[static_cast<std::size_t>(r)];
        p["estimate"] = doc.estimates[r];
        if (doc.se.size() == doc.estimates.size()) {
            p["se"] = doc.se[r];
            p["z"] = doc.z[r];
        }
        if (doc.first_stage_estimates.size() == doc.estimates.size())
            p["first_stage"] = doc.first_stage_estimates[r];
        params.push_back(std::move(p));
    }
    j["fit"] = {{"converged", doc.converged},
                {"n_iterations", doc.n_iterations},
                {"moment_norm", doc.moment_norm},
                {"parameters", std::move(params)},
                {"between_cov", matrix_to_json(doc.between_cov)},
                {"sandwich_cov", matrix_to_json(doc.sandwich_cov)}};
    j["fit"]["timing"] = {{"first_stage_s", doc.seconds_first_stage},
                          {"second_stage_s", doc.seconds_second_stage},
                          {"sandwich_s", doc.seconds_sandwich},
                          {"latent_s", doc.seconds_latent}};
    j["latent_correlation"] = {{"matrix", matrix_to_json(doc.latent_correlation)},
                               {"pairs", doc.latent_pairs},
                               {"min_eigenvalue", doc.latent_min_eigenvalue},
                               {"positive_semidefinite", doc.latent_psd}};
    j["polychoric"] = {{"corr_yy", matrix_to_json(doc.polychoric_corr)},
                       {"sigma_yy", matrix_to_json(doc.polychoric_sigma)},
                       {"structural", matrix_to_json(doc.polychoric_structural)}};
    j["r2"] = vector_to_json(doc.r2);
    j["exact_se"] = vector_to_json(doc.exact_se);
    if (doc.pearson.size() != 0) j["pearson_coded"] = matrix_to_json(doc.pearson);
    return j;
}

inline ResultsDocument results_from_json(const json& j) {
    if (!j.contains("schema") || j.at("schema").get<int>() != kResultsSchema)
        throw std::runtime_error("results schema mismatch: expected version " +
                                 std::to_string(kResultsSchema));
    ResultsDocument doc;
    doc.model = model_from_json(j.at("model"));
    doc.options = j.value("options", json::object());
    doc.n_obs = j.at("n_obs").get<long>();
    const auto& fit = j.at("fit");
    doc.converged = fit.at("converged").get<bool>();
    doc.n_iterations = fit.at("n_iterations").get<int>();
    doc.moment_norm = fit.at("moment_norm").get<double>();
    const auto& params = fit.at("parameters");
    const long dim = static_cast<long>(params.size());
    doc.estimates.resize(dim);
    doc.se.resize(dim);
    doc.z.resize(dim);
    doc.first_stage_estimates.resize(dim);
    for (long r = 0; r < dim; ++r) {
        const auto& p = params.at(static_cast<std::size_t>(r));
        doc.labels.push_back(p.at("name").get<std::string>());
        doc.estimates[r] = p.at("estimate").get<double>();
        doc.se[r] = p.value("se", 0.0);
        doc.z[r] = p.value("z", 0.0);
        doc.first_stage_estimates[r] = p.value("first_stage", 0.0);
    }
    doc.between_cov = matrix_from_json(fit.at("between_cov"));
    doc.sandwich_cov = matrix_from_json(fit.at("sandwich_cov"));
    const auto& timing = fit.at("timing");
    doc.seconds_first_stage = timing.at("first_stage_s").get<double>();
    doc.seconds_second_stage = timing.at("second_stage_s").get<double>();
    doc.seconds_sandwich = timing.at("sandwich_s").get<double>();
    doc.seconds_latent = timing.at("latent_s").get<double>();
    const auto& latent = j.at("latent_correlation");
    doc.latent_correlation = matrix_from_json(latent.at("matrix"));
    doc.latent_pairs = latent.at("pairs");
    doc.latent_min_eigenvalue = latent.at("min_eigenvalue").get<double>();
    doc.latent_psd = latent.at("positive_semidefinite").get<bool>();
    const auto& poly = j.at("polychoric");
    doc.polychoric_corr = matrix_from_json(poly.at("corr_yy"));
    doc.polychoric_sigma = matrix_from_json(poly.at("sigma_yy"));
    doc.polychoric_structural = matrix_from_json(poly.at("structural"));
    doc.r2 = vector_from_json(j.at("r2"));
    doc.exact_se = vector_from_json(j.at("exact_se"));
    if (j.contains("pearson_coded")) doc.pearson = matrix_from_json(j.at("pearson_coded"));
    return doc;
}

inline void write_results(const std::string& path, const ResultsDocument& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << results_to_json(doc).dump(2) << '\n';
}

inline ResultsDocument read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return results_from_json(j);
}

// ---------------------------------------------------------------------------
// table rendering

inline std::string format_fixed(double v, int digits = 4) {
    char buffer[48];
    std::snprintf(buffer, sizeof(buffer), "%.*f", digits, v);
    return buffer;
}

inline std::string render_matrix(const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
    std::ostringstream out;
    for (long r = 0; r < m.rows(); ++r) {
        out << "  ";
        if (r < static_cast<long>(names.size())) {
            out << names[static_cast<std::size_t>(r)];
            for (std::size_t pad = names[static_cast<std::size_t>(r)].size(); pad < 12; ++pad) out << ' ';
        }
        for (long c = 0; c <= r && c < m.cols(); ++c) out << ' ' << format_fixed(m(r, c));
        out << '\n';
    }
    return out.str();
}

inline std::string render_results_text(const ResultsDocument& doc) {
    std::ostringstream out;
    out << kToolName << " fit: N=" << doc.n_obs << "  converged=" << (doc.converged ? "yes" : "no")
        << "  iterations=" << doc.n_iterations << "  moment norm=" << doc.moment_norm << "\n\n";
    out << "  parameter                     estimate     s.e.        z";
    if (doc.first_stage_estimates.size() == doc.estimates.size()) out << "        first-stage";
    out << '\n';
    for (long r = 0; r < doc.estimates.size(); ++r) {
        const std::string& name = doc.labels[static_cast<std::size_t>(r)];
        out << "  " << name;
        for (std::size_t pad = name.size(); pad < 28; ++pad) out << ' ';
        out << format_fixed(doc.estimates[r]) << "   ";
        if (doc.se.size() == doc.estimates.size())
            out << format_fixed(doc.se[r]) << "   " << format_fixed(doc.z[r], 2);
        if (doc.first_stage_estimates.size() == doc.estimates.size())
            out << "     " << format_fixed(doc.first_stage_estimates[r]);
        out << '\n';
    }
    std::vector<std::string> response_names;
    for (const auto& eq : doc.model.equations) response_names.push_back(eq.response_name);
    out << "\n  in-between residual covariance\n" << render_matrix(doc.between_cov, response_names);
    out << "\n  latent error correlation (matched)\n"
        << render_matrix(doc.latent_correlation, response_names);
    if (!doc.latent_psd)
        out << "  warning: matched matrix is not positive semidefinite (min eigenvalue "
            << format_fixed(doc.latent_min_eigenvalue, 6) << ")\n";
    out << "\n  latent response correlation\n" << render_matrix(doc.polychoric_corr, response_names);
    if (doc.pearson.size() != 0)
        out << "\n  Pearson correlation of coded responses\n"
            << render_matrix(doc.pearson, response_names);
    out << "\n  structural-share R^2 per equation\n";
    for (long k = 0; k < doc.r2.size(); ++k)
        out << "  " << response_names[static_cast<std::size_t>(k)] << ": " << format_fixed(doc.r2[k]) << '\n';
    return out.str();
}

inline std::string render_results_csv(const ResultsDocument& doc) {
    std::ostringstream out;
    out << "name,estimate,se,z\n";
    for (long r = 0; r < doc.estimates.size(); ++r)
        out << doc.labels[static_cast<std::size_t>(r)] << ',' << format_real(doc.estimates[r]) << ','
            << format_real(doc.se.size() ? doc.se[r] : 0.0) << ','
            << format_real(doc.z.size() ? doc.z[r] : 0.0) << '\n';
    return out.str();
}

} // namespace coarsemom
