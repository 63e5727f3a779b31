#include <doctest.h>

#include <cmath>

#include "coarsemom/post.hpp"
#include "test_helpers.hpp"

using namespace coarsemom;

TEST_CASE("polychoric matrix: zero structural part returns the error correlations") {
    DgpConfig cfg = th::two_equation(0.6, {0.0, 0.0}, {-0.4}, {0.0, 0.0}, {0.3});
    GeneratedData gen = generate(cfg, 500, 1);
    const ModelSpec spec = cfg.model_spec();
    Problem problem(spec, gen.dataset);
    ParamSet params = ParamSet::zeros(spec);
    params.cutpoints[0] << -0.4;
    params.cutpoints[1] << 0.3;

    Eigen::MatrixXd latent(2, 2);
    latent << 1.0, 0.6, 0.6, 1.0;
    const PolychoricReport report = polychoric_matrix(problem, params, latent);
    CHECK(report.corr_yy(0, 1) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(report.corr_yy(0, 0) == doctest::Approx(1.0));
    CHECK((report.sigma_yy - (report.structural + report.error)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("polychoric matrix: identical equations with independent errors") {
    // both equations carry the same index x'beta and rho_err = 0, so the
    // latent response correlation is s/(s+1)
    DgpConfig cfg = th::two_equation(0.0, {0.8, -0.5}, {0.0}, {0.8, -0.5}, {0.0});
    GeneratedData gen = generate(cfg, 20000, 3);
    const ModelSpec spec = cfg.model_spec();
    Problem problem(spec, gen.dataset);
    ParamSet params = ParamSet::zeros(spec);
    params.beta[0] << 0.8, -0.5;
    params.beta[1] << 0.8, -0.5;
    params.cutpoints[0] << 0.0;
    params.cutpoints[1] << 0.0;

    const PolychoricReport report =
        polychoric_matrix(problem, params, Eigen::MatrixXd::Identity(2, 2));
    const Eigen::VectorXd index = problem.x(0) * params.beta[0];
    const double s = index.squaredNorm() / double(problem.n_obs());
    CHECK(report.corr_yy(0, 1) == doctest::Approx(s / (s + 1.0)).epsilon(1e-10));
    CHECK(report.sigma_yy(0, 0) == doctest::Approx(s + 1.0).epsilon(1e-10));
}

TEST_CASE("structural-share R^2: closed forms and invariance") {
    DgpConfig cfg = th::single_equation({1.0, 0.5}, {0.0});
    GeneratedData gen = generate(cfg, 5000, 5);
    const ModelSpec spec = cfg.model_spec();
    Problem problem(spec, gen.dataset);
    ParamSet params = ParamSet::zeros(spec);

    CHECK(mckelvey_zavoina_r2(problem, params, 0) == 0.0);

    params.beta[0] << 1.0, 0.5;
    const Eigen::VectorXd index = problem.x(0) * params.beta[0];
    const double s = index.squaredNorm() / double(problem.n_obs());
    CHECK(mckelvey_zavoina_r2(problem, params, 0) == doctest::Approx(s / (s + 1.0)).epsilon(1e-12));

    // rescaling a column and inversely rescaling its coefficient changes nothing
    Dataset scaled = gen.dataset;
    scaled.regressors.col(0) *= 4.0;
    Problem problem_scaled(spec, scaled);
    ParamSet params_scaled = params;
    params_scaled.beta[0][0] /= 4.0;
    CHECK(mckelvey_zavoina_r2(problem_scaled, params_scaled, 0) ==
          doctest::Approx(mckelvey_zavoina_r2(problem, params, 0)).epsilon(1e-12));

    // unit structural variance gives one half
    ModelSpec unit_spec;
    unit_spec.equations.push_back({"y", {"x"}, 2});
    Dataset unit;
    unit.regressor_names = {"x"};
    unit.regressors.resize(4, 1);
    unit.regressors << 1.0, -1.0, 1.0, -1.0;
    unit.responses.resize(4, 1);
    unit.responses << 1, 1, 2, 2;
    Problem unit_problem(unit_spec, unit);
    ParamSet unit_params = ParamSet::zeros(unit_spec);
    unit_params.beta[0] << 1.0;
    CHECK(mckelvey_zavoina_r2(unit_problem, unit_params, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pearson correlations of coded responses") {
    // perfectly concordant binary items
    Dataset data;
    data.regressor_names = {"x"};
    data.regressors.resize(6, 1);
    data.regressors << 1, 2, 3, 4, 5, 6;
    data.responses.resize(6, 2);
    data.responses << 1, 1, 2, 2, 1, 1, 2, 2, 1, 1, 2, 2;
    const std::vector<std::vector<double>> codes = {{0.0, 1.0}, {0.0, 1.0}};
    const Eigen::MatrixXd corr = pearson_coded(data, codes);
    CHECK(corr(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // a monotone recoding changes the matrix (the coding is arbitrary)
    DgpConfig cfg = th::two_equation(0.4, {1.0, 0.0}, {-0.8, 0.6}, {0.5, 0.5}, {-0.5, 0.9});
    GeneratedData gen = generate(cfg, 4000, 9);
    const Eigen::MatrixXd linear =
        pearson_coded(gen.dataset, {{0, 1, 2}, {0, 1, 2}});
    const Eigen::MatrixXd warped =
        pearson_coded(gen.dataset, {{0, 2, 3}, {0, 2, 3}});
    CHECK(std::fabs(linear(0, 1) - warped(0, 1)) > 1e-4);

    // independent items at large n: near-zero correlation
    DgpConfig cfg0 = th::two_equation(0.0, {0.0, 0.0}, {0.0}, {0.0, 0.0}, {0.0});
    GeneratedData gen0 = generate(cfg0, 50000, 13);
    const Eigen::MatrixXd indep = pearson_coded(gen0.dataset, {{0, 1}, {0, 1}});
    CHECK(std::fabs(indep(0, 1)) <= 0.02);

    // zero-variance coding is an error
    CHECK_THROWS_AS(pearson_coded(gen0.dataset, {{1.0, 1.0}, {0.0, 1.0}}), numeric_error);
}

TEST_CASE("exact-observation GLS standard errors") {
    // K = 1, unit-variance regressor: se = 1/sqrt(N)
    ModelSpec spec;
    spec.equations.push_back({"y", {"x"}, 2});
    const long n = 400;
    Dataset data;
    data.regressor_names = {"x"};
    data.regressors.resize(n, 1);
    for (long i = 0; i < n; ++i) data.regressors(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
    data.responses.resize(n, 1);
    for (long i = 0; i < n; ++i) data.responses(i, 0) = 1 + static_cast<int>(i % 2);
    Problem problem(spec, data);
    MomentLayout layout(spec);
    const Eigen::VectorXd se = exact_data_se(problem, layout, Eigen::MatrixXd::Identity(1, 1));
    CHECK(se[0] == doctest::Approx(1.0 / std::sqrt(double(n))).epsilon(1e-12));

    // doubling N scales by 1/sqrt(2)
    Dataset doubled;
    doubled.regressor_names = {"x"};
    doubled.regressors.resize(2 * n, 1);
    doubled.responses.resize(2 * n, 1);
    for (long i = 0; i < 2 * n; ++i) {
        doubled.regressors(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
        doubled.responses(i, 0) = 1 + static_cast<int>(i % 2);
    }
    Problem problem2(spec, doubled);
    const Eigen::VectorXd se2 = exact_data_se(problem2, layout, Eigen::MatrixXd::Identity(1, 1));
    CHECK(se2[0] == doctest::Approx(se[0] / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("exact-observation standard errors sit below the coarsened ones") {
    const GeneratedData gen = generate_5c(4000, 11);
    const ModelSpec spec = config_5c().model_spec();
    const FitResult res = fit(spec, gen.dataset);
    REQUIRE(res.converged);
    const Problem problem(spec, gen.dataset);
    const MomentLayout layout(spec);
    const LatentCov latent = full_correlation_matrix(problem, res);
    const Eigen::VectorXd exact = exact_data_se(problem, layout, latent.correlation);
    for (int g = 0; g < layout.n_beta(); ++g) CHECK(exact[g] <= res.se[g]);
}
