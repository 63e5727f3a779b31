// Command-line driver: simulate synthetic datasets, fit coarsened-response
// models, tabulate the latent-vs-in-between correlation map, re-render saved
// results, and run the ML reference fits.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure,
// 4 non-convergence (output is still written).

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coarsemom/coarsemom.hpp"

namespace {

using namespace coarsemom;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNonConvergence = 4;

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> values;
    std::string token;
    std::istringstream stream(text);
    while (std::getline(stream, token, ',')) {
        if (token.empty()) continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(token, &used);
            if (used != token.size()) throw std::runtime_error("");
            values.push_back(v);
        } catch (const std::exception&) {
            throw std::runtime_error("not a number: '" + token + "'");
        }
    }
    return values;
}

// grid spec: two comma-separated ascending cut lists joined by ';',
// e.g. "-0.5,0,0.75;-0.75,-0.5,0.5"
std::pair<Eigen::VectorXd, Eigen::VectorXd> parse_grid_spec(const std::string& text) {
    const auto semi = text.find(';');
    if (semi == std::string::npos)
        throw std::runtime_error("grid spec must contain ';' between the two cut lists");
    const std::vector<double> c1 = parse_number_list(text.substr(0, semi));
    const std::vector<double> c2 = parse_number_list(text.substr(semi + 1));
    if (c1.empty() || c2.empty()) throw std::runtime_error("grid spec has an empty cut list");
    auto to_vec = [](const std::vector<double>& v) {
        Eigen::VectorXd out(static_cast<long>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<long>(i)] = v[i];
        for (long i = 1; i < out.size(); ++i)
            if (!(out[i - 1] < out[i])) throw std::runtime_error("grid cut list is not ascending");
        return out;
    };
    return {to_vec(c1), to_vec(c2)};
}

struct SimulateArgs {
    std::string dgp_name = "";
    std::string config_path = "";
    long n = 0;
    std::uint64_t seed = 1;
    std::string out;
    std::string latent_out = "";
};

int cmd_simulate(const SimulateArgs& args) {
    DgpConfig cfg;
    if (args.dgp_name == "5c") {
        cfg = config_5c();
    } else if (!args.config_path.empty()) {
        cfg = read_dgp_config(args.config_path);
    } else {
        std::cerr << "simulate: pass --dgp 5c or --config <file>\n";
        return kExitUsage;
    }
    const GeneratedData gen = generate(cfg, args.n, args.seed);
    std::vector<std::string> response_names;
    for (const auto& eq : cfg.equations) response_names.push_back(eq.response_name);
    write_dataset_csv(args.out, response_names, gen.dataset);
    if (!args.latent_out.empty())
        write_latent_csv(args.latent_out, response_names, gen.latent, gen.errors);
    std::cout << "wrote " << gen.dataset.n_obs() << " observations, "
              << gen.dataset.regressors.cols() << " regressors, " << cfg.n_equations()
              << " responses to " << args.out << '\n';
    return kExitOk;
}

struct FitArgs {
    std::string data_path;
    std::string model_path;
    int max_iter = 100;
    double tol = 1e-8;
    bool no_demean = false;
    std::string latent_mode = "exact";
    long draws = 10000;
    std::uint64_t seed = 1;
    std::string out = "";
    bool pearson = true;
};

int cmd_fit(const FitArgs& args) {
    const ModelSpec spec = read_model_json(args.model_path);
    Dataset data = read_dataset_csv(args.data_path, spec);

    const ValidationReport report = validate(spec, data);
    if (!report.ok()) {
        std::cerr << "validation failed:\n" << report.summary();
        return kExitValidation;
    }

    Eigen::VectorXd column_means = Eigen::VectorXd::Zero(data.regressors.cols());
    if (!args.no_demean) {
        DemeanResult centered = demean_regressors(data);
        data = std::move(centered.data);
        column_means = centered.column_means;
    }

    FitOptions options;
    options.max_outer_iterations = args.max_iter;
    options.param_tolerance = args.tol;

    const FitResult result = fit(spec, data, options);
    const Problem problem(spec, data);
    const MomentLayout layout(spec);

    MatchOptions match_opts;
    match_opts.exact = args.latent_mode == "exact";
    if (!match_opts.exact)
        match_opts.n_draws_per_obs = std::max<long>(1, args.draws / data.n_obs());
    match_opts.seed = args.seed;
    const auto latent_start = std::chrono::steady_clock::now();
    const LatentCov latent = full_correlation_matrix(problem, result, match_opts);
    const double latent_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - latent_start).count();

    const PolychoricReport poly = polychoric_matrix(problem, result.params, latent.correlation);

    ResultsDocument doc;
    doc.model = spec;
    doc.options = {{"data", args.data_path},        {"model", args.model_path},
                   {"max_iter", args.max_iter},     {"tol", args.tol},
                   {"demean", !args.no_demean},     {"latent_mode", args.latent_mode},
                   {"draws", args.draws},           {"seed", args.seed},
                   {"column_means", vector_to_json(column_means)}};
    doc.n_obs = data.n_obs();
    doc.labels = result.labels;
    doc.estimates = result.estimates;
    doc.se = result.se;
    doc.z = result.z;
    doc.first_stage_estimates = layout.pack(result.first_stage);
    doc.sandwich_cov = result.sandwich_cov;
    doc.between_cov = result.between_cov;
    doc.converged = result.converged;
    doc.n_iterations = result.n_iterations;
    doc.moment_norm = result.moment_norm_final;
    doc.latent_correlation = latent.correlation;
    for (std::size_t p = 0; p < latent.pair_results.size(); ++p) {
        const auto& [k1, k2] = latent.pair_index[p];
        const MatchResult& m = latent.pair_results[p];
        doc.latent_pairs.push_back({{"k1", k1},
                                    {"k2", k2},
                                    {"rho", m.rho_hat},
                                    {"target", m.target_between},
                                    {"achieved", m.achieved_between},
                                    {"attainable", m.attainable},
                                    {"iterations", m.bracket_iterations},
                                    {"draws", m.n_draws}});
    }
    doc.latent_min_eigenvalue = latent.min_eigenvalue;
    doc.latent_psd = latent.positive_semidefinite;
    doc.polychoric_corr = poly.corr_yy;
    doc.polychoric_sigma = poly.sigma_yy;
    doc.polychoric_structural = poly.structural;
    doc.r2.resize(spec.n_equations());
    for (int k = 0; k < spec.n_equations(); ++k)
        doc.r2[k] = mckelvey_zavoina_r2(problem, result.params, k);
    try {
        doc.exact_se = exact_data_se(problem, layout, latent.correlation);
    } catch (const numeric_error&) {
        doc.exact_se = Eigen::VectorXd();  // matched matrix not PD; column omitted
    }
    if (args.pearson) {
        std::vector<std::vector<double>> codes;
        for (const auto& eq : spec.equations) {
            std::vector<double> code;
            for (int j = 0; j < eq.n_categories; ++j) code.push_back(j);
            codes.push_back(std::move(code));
        }
        doc.pearson = pearson_coded(data, codes);
    }
    doc.seconds_first_stage = result.seconds_first_stage;
    doc.seconds_second_stage = result.seconds_second_stage;
    doc.seconds_sandwich = result.seconds_sandwich;
    doc.seconds_latent = latent_seconds;

    if (!args.out.empty()) write_results(args.out, doc);
    std::cout << render_results_text(doc);
    return result.converged ? kExitOk : kExitNonConvergence;
}

struct TableA1Args {
    std::string grid;
    std::string rhos = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    long n = 10000;
    std::uint64_t seed = 1;
    std::string mode = "mc";
    std::string out = "";
};

int cmd_table_a1(const TableA1Args& args) {
    const auto [cuts1, cuts2] = parse_grid_spec(args.grid);
    const std::vector<double> rhos = parse_number_list(args.rhos);
    if (rhos.empty()) {
        std::cerr << "table-a1: empty rho list\n";
        return kExitUsage;
    }
    PairGrids grids;
    grids.push_back(make_pair_grid(cuts1, 0.0, cuts2, 0.0));

    std::ostringstream csv;
    csv << "rho,rho_between\n";
    for (double rho : rhos) {
        const double value = args.mode == "exact"
                                 ? exact_between_cov(grids, rho)
                                 : simulate_between_cov(grids, rho, args.n, args.seed);
        csv << format_real(rho) << ',' << format_real(value) << '\n';
    }
    if (args.out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream out(args.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + args.out);
        out << csv.str();
        std::cout << "wrote " << args.out << '\n';
    }
    return kExitOk;
}

int cmd_report(const std::string& path, const std::string& format) {
    const ResultsDocument doc = read_results(path);
    if (format == "csv") std::cout << render_results_csv(doc);
    else std::cout << render_results_text(doc);
    return kExitOk;
}

struct OracleArgs {
    std::string data_path;
    std::string model_path;
    int eq = 1;
    int eq2 = 2;
    std::string out = "";
};

int cmd_oracle(const std::string& which, const OracleArgs& args) {
    const ModelSpec spec = read_model_json(args.model_path);
    Dataset data = read_dataset_csv(args.data_path, spec);
    const ValidationReport report = validate(spec, data);
    if (!report.ok()) {
        std::cerr << "validation failed:\n" << report.summary();
        return kExitValidation;
    }
    DemeanResult centered = demean_regressors(data);
    const Problem problem(spec, centered.data);

    json j;
    if (which == "op") {
        const OracleFit fit = op_ml_fit(problem, args.eq - 1);
        j["kind"] = "op";
        j["equation"] = args.eq;
        j["estimates"] = vector_to_json(fit.estimates);
        j["se"] = vector_to_json(fit.se);
        j["labels"] = fit.labels;
        j["loglik"] = fit.loglik;
        j["converged"] = fit.converged;
        j["gradient_norm"] = fit.gradient_norm;
    } else {
        const BiprobitFit fit = biprobit_ml_fit(problem, args.eq - 1, args.eq2 - 1);
        j["kind"] = "biprobit";
        j["equations"] = {args.eq, args.eq2};
        j["estimates"] = vector_to_json(fit.fit.estimates);
        j["se"] = vector_to_json(fit.fit.se);
        j["rho"] = fit.rho;
        j["rho_se"] = fit.rho_se;
        j["loglik"] = fit.fit.loglik;
        j["converged"] = fit.fit.converged;
        j["gradient_norm"] = fit.fit.gradient_norm;
    }
    if (args.out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream out(args.out, std::ios::binary);
        out << j.dump(2) << '\n';
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"moment-based estimation of latent linear models from ordinal responses"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    simulate->add_option("--dgp", sim.dgp_name, "built-in generator name (5c)");
    simulate->add_option("--config", sim.config_path, "DGP config JSON");
    simulate->add_option("--n", sim.n, "number of observations")->required()->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "random seed");
    simulate->add_option("--out", sim.out, "output CSV path")->required();
    simulate->add_option("--latent-out", sim.latent_out, "optional latent-values CSV");

    FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "estimate a model from a dataset");
    fit_cmd->add_option("--data", fit_args.data_path, "dataset CSV")->required();
    fit_cmd->add_option("--model", fit_args.model_path, "model JSON")->required();
    fit_cmd->add_option("--max-iter", fit_args.max_iter, "outer iteration cap");
    fit_cmd->add_option("--tol", fit_args.tol, "parameter tolerance");
    fit_cmd->add_flag("--no-demean", fit_args.no_demean, "skip regressor demeaning");
    fit_cmd->add_option("--latent-cov", fit_args.latent_mode, "latent matching mode")
        ->check(CLI::IsMember({"exact", "mc"}));
    fit_cmd->add_option("--draws", fit_args.draws, "total Monte Carlo draws for mc mode");
    fit_cmd->add_option("--seed", fit_args.seed, "seed for mc matching");
    fit_cmd->add_option("--out", fit_args.out, "results JSON path");
    fit_cmd->add_flag("!--no-pearson", fit_args.pearson, "skip the coded Pearson matrix");

    TableA1Args a1;
    CLI::App* table =
        app.add_subcommand("table-a1", "latent vs in-between correlation table for a grid pair");
    table->add_option("--grid", a1.grid, "cut lists, e.g. \"-0.5,0,0.75;-0.75,-0.5,0.5\"")->required();
    table->add_option("--rhos", a1.rhos, "comma-separated correlation list");
    table->add_option("--n", a1.n, "Monte Carlo draws")->check(CLI::PositiveNumber);
    table->add_option("--seed", a1.seed, "random seed");
    table->add_option("--mode", a1.mode, "exact or mc")->check(CLI::IsMember({"exact", "mc"}));
    table->add_option("--out", a1.out, "output CSV path (default stdout)");

    std::string report_path, report_format = "text";
    CLI::App* report_cmd = app.add_subcommand("report", "render a saved results document");
    report_cmd->add_option("--results", report_path, "results JSON")->required();
    report_cmd->add_option("--format", report_format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}));

    OracleArgs oracle_args;
    CLI::App* oracle_cmd = app.add_subcommand("oracle", "maximum-likelihood reference fits");
    oracle_cmd->require_subcommand(1);
    CLI::App* op_cmd = oracle_cmd->add_subcommand("op", "single-equation ordered probit ML");
    op_cmd->add_option("--data", oracle_args.data_path)->required();
    op_cmd->add_option("--model", oracle_args.model_path)->required();
    op_cmd->add_option("--eq", oracle_args.eq, "equation number (1-based)");
    op_cmd->add_option("--out", oracle_args.out);
    CLI::App* bi_cmd = oracle_cmd->add_subcommand("biprobit", "two-equation ML with correlation");
    bi_cmd->add_option("--data", oracle_args.data_path)->required();
    bi_cmd->add_option("--model", oracle_args.model_path)->required();
    bi_cmd->add_option("--eq1", oracle_args.eq);
    bi_cmd->add_option("--eq2", oracle_args.eq2);
    bi_cmd->add_option("--out", oracle_args.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim);
        if (fit_cmd->parsed()) return cmd_fit(fit_args);
        if (table->parsed()) return cmd_table_a1(a1);
        if (report_cmd->parsed()) return cmd_report(report_path, report_format);
        if (oracle_cmd->parsed())
            return cmd_oracle(op_cmd->parsed() ? "op" : "biprobit", oracle_args);
    } catch (const degenerate_cell_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation failure: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
