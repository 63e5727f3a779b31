#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "coarsemom/io.hpp"
#include "test_helpers.hpp"

using namespace coarsemom;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string name) : path("io_test_" + std::move(name)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("dataset CSV: write, read back, write again byte-stable") {
    const GeneratedData gen = generate_5c(200, 21);
    const ModelSpec spec = config_5c().model_spec();
    std::vector<std::string> responses;
    for (const auto& eq : spec.equations) responses.push_back(eq.response_name);

    TempFile a("a.csv"), b("b.csv");
    write_dataset_csv(a.path, responses, gen.dataset);
    const Dataset read_back = read_dataset_csv(a.path, spec);
    CHECK(read_back.n_obs() == 200);
    CHECK(read_back.regressor_names == gen.dataset.regressor_names);
    CHECK((read_back.responses - gen.dataset.responses).cwiseAbs().maxCoeff() == 0);
    // 17 significant digits round-trip doubles exactly
    CHECK((read_back.regressors - gen.dataset.regressors).cwiseAbs().maxCoeff() == 0.0);

    write_dataset_csv(b.path, responses, read_back);
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("model JSON: parse and round trip, including ties") {
    json j = {
        {"equations",
         {{{"response", "y1"}, {"regressors", {"x1", "x2"}}, {"categories", 3}},
          {{"response", "y2"}, {"regressors", {"x1"}}, {"categories", 2}}}},
        {"ties", {{{0, "x1"}, {1, "x1"}}}},
    };
    const ModelSpec spec = model_from_json(j);
    CHECK(spec.n_equations() == 2);
    CHECK(spec.equations[0].n_categories == 3);
    CHECK(spec.ties.size() == 1);
    CHECK(spec.ties[0].size() == 2);
    const ModelSpec again = model_from_json(model_to_json(spec));
    CHECK(again.equations[1].response_name == "y2");
    CHECK(again.ties == spec.ties);
}

TEST_CASE("results document round trips losslessly") {
    // run a tiny full pipeline to populate every field
    DgpConfig cfg = th::two_equation(0.4, {0.9, -0.3}, {-0.5}, {0.4, 0.8}, {-0.2, 0.9});
    GeneratedData gen = generate(cfg, 1500, 23);
    const ModelSpec spec = cfg.model_spec();
    const FitResult res = fit(spec, gen.dataset);
    const Problem problem(spec, gen.dataset);
    const MomentLayout layout(spec);
    const LatentCov latent = full_correlation_matrix(problem, res);
    const PolychoricReport poly = polychoric_matrix(problem, res.params, latent.correlation);

    ResultsDocument doc;
    doc.model = spec;
    doc.options = {{"seed", 23}, {"demean", false}};
    doc.n_obs = gen.dataset.n_obs();
    doc.labels = res.labels;
    doc.estimates = res.estimates;
    doc.se = res.se;
    doc.z = res.z;
    doc.first_stage_estimates = layout.pack(res.first_stage);
    doc.sandwich_cov = res.sandwich_cov;
    doc.between_cov = res.between_cov;
    doc.converged = res.converged;
    doc.n_iterations = res.n_iterations;
    doc.moment_norm = res.moment_norm_final;
    doc.latent_correlation = latent.correlation;
    doc.latent_min_eigenvalue = latent.min_eigenvalue;
    doc.latent_psd = latent.positive_semidefinite;
    doc.polychoric_corr = poly.corr_yy;
    doc.polychoric_sigma = poly.sigma_yy;
    doc.polychoric_structural = poly.structural;
    doc.r2.resize(2);
    doc.r2 << mckelvey_zavoina_r2(problem, res.params, 0), mckelvey_zavoina_r2(problem, res.params, 1);
    doc.exact_se = exact_data_se(problem, layout, latent.correlation);
    doc.pearson = pearson_coded(gen.dataset, {{0, 1}, {0, 1, 2}});

    TempFile f("results.json");
    write_results(f.path, doc);
    const ResultsDocument back = read_results(f.path);

    CHECK(back.n_obs == doc.n_obs);
    CHECK(back.converged == doc.converged);
    CHECK(back.labels == doc.labels);
    CHECK((back.estimates - doc.estimates).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.se - doc.se).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.sandwich_cov - doc.sandwich_cov).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.between_cov - doc.between_cov).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.latent_correlation - doc.latent_correlation).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.polychoric_corr - doc.polychoric_corr).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.r2 - doc.r2).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.pearson - doc.pearson).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.moment_norm == doc.moment_norm);

    // serialize -> parse -> serialize is byte-stable
    TempFile g("results2.json");
    write_results(g.path, back);
    CHECK(slurp(f.path) == slurp(g.path));

    // schema mismatch is rejected
    json wrong = results_to_json(doc);
    wrong["schema"] = 999;
    CHECK_THROWS_AS(results_from_json(wrong), std::runtime_error);

    // rendering produces one row per parameter
    const std::string text = render_results_text(doc);
    for (const auto& label : doc.labels) CHECK(text.find(label) != std::string::npos);
    const std::string csv = render_results_csv(doc);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + doc.estimates.size());
}

TEST_CASE("DGP config JSON drives the generic generator") {
    json j = {
        {"columns",
         {{{"name", "x1"}, {"kind", "normal"}, {"sd", 1.0}},
          {{"name", "d"}, {"kind", "discrete"}, {"values", {-1.0, 1.0}}, {"hidden", true}},
          {{"name", "x2"}, {"kind", "combo"}, {"weights", {{"x1", 0.5}, {"d", 1.0}}}, {"noise_sd", 0.0}}}},
        {"equations",
         {{{"response", "y"},
           {"regressors", {"x1", "x2"}},
           {"coefficients", {1.0, -0.5}},
           {"cutpoints", {-0.5, 0.5}}}}},
        {"sigma", {{1.0}}},
    };
    const DgpConfig cfg = dgp_config_from_json(j);
    CHECK(cfg.columns.size() == 3);
    CHECK(cfg.columns[1].hidden);
    const GeneratedData gen = generate(cfg, 300, 31);
    CHECK(gen.dataset.regressor_names == std::vector<std::string>{"x1", "x2"});
    CHECK(validate(cfg.model_spec(), gen.dataset).ok());
}

TEST_CASE("malformed inputs produce informative errors") {
    TempFile f("bad.json");
    {
        std::ofstream out(f.path);
        out << "{ not json";
    }
    CHECK_THROWS_AS(read_model_json(f.path), std::runtime_error);
    CHECK_THROWS_AS(read_results(f.path), std::runtime_error);
    CHECK_THROWS_AS(read_dataset_csv("does_not_exist.csv", ModelSpec{}), std::runtime_error);

    // CSV with a ragged row
    TempFile g("ragged.csv");
    {
        std::ofstream out(g.path);
        out << "y,x\n1,0.5\n2\n";
    }
    ModelSpec spec;
    spec.equations.push_back({"y", {"x"}, 2});
    CHECK_THROWS_AS(read_dataset_csv(g.path, spec), std::runtime_error);

    // CSV missing the response column
    TempFile h("noresp.csv");
    {
        std::ofstream out(h.path);
        out << "z,x\n1,0.5\n";
    }
    CHECK_THROWS_AS(read_dataset_csv(h.path, spec), std::runtime_error);
}
