#include <doctest.h>

#include <cmath>

#include "coarsemom/datagen.hpp"
#include "coarsemom/model.hpp"
#include "test_helpers.hpp"

using namespace coarsemom;

TEST_CASE("validate passes a well-formed generated dataset") {
    const GeneratedData gen = generate_5c(500, 1);
    const ModelSpec spec = config_5c().model_spec();
    CHECK(validate(spec, gen.dataset).ok());
}

TEST_CASE("validate reports range, empty-category, and missing-column violations") {
    GeneratedData gen = generate_5c(300, 2);
    ModelSpec spec = config_5c().model_spec();

    SUBCASE("out-of-range response") {
        gen.dataset.responses(5, 3) = 5;  // J_4 = 4
        const auto report = validate(spec, gen.dataset);
        CHECK(!report.ok());
        CHECK(report.summary().find("out of range") != std::string::npos);
    }
    SUBCASE("unoccupied category") {
        for (long i = 0; i < gen.dataset.n_obs(); ++i)
            if (gen.dataset.responses(i, 2) == 2) gen.dataset.responses(i, 2) = 3;
        const auto report = validate(spec, gen.dataset);
        CHECK(!report.ok());
        CHECK(report.summary().find("category 2 unoccupied") != std::string::npos);
    }
    SUBCASE("missing column") {
        spec.equations[0].regressor_names.push_back("x9");
        const auto report = validate(spec, gen.dataset);
        CHECK(!report.ok());
        CHECK(report.summary().find("missing column x9") != std::string::npos);
    }
    SUBCASE("constant column rejected") {
        gen.dataset.regressors.col(1).setConstant(2.0);
        const auto report = validate(spec, gen.dataset);
        CHECK(!report.ok());
        CHECK(report.summary().find("constant column") != std::string::npos);
    }
    SUBCASE("mixed tie group rejected") {
        spec.ties.push_back({{0, "x1"}, {1, "x2"}});
        const auto report = validate(spec, gen.dataset);
        CHECK(!report.ok());
        CHECK(report.summary().find("mixes regressors") != std::string::npos);
    }
    SUBCASE("valid tie group accepted") {
        spec.ties.push_back({{0, "x1"}, {1, "x1"}, {2, "x1"}});
        CHECK(validate(spec, gen.dataset).ok());
    }
}

TEST_CASE("demean_regressors centers exactly and is idempotent") {
    const GeneratedData gen = generate_5c(2000, 3);
    const DemeanResult centered = demean_regressors(gen.dataset);
    for (long c = 0; c < centered.data.regressors.cols(); ++c) {
        CHECK(std::fabs(centered.data.regressors.col(c).mean()) <= 1e-12);
        // DGP columns are mean zero in population
        CHECK(std::fabs(centered.column_means[c]) <= 0.2);
    }
    const DemeanResult again = demean_regressors(centered.data);
    CHECK((again.data.regressors - centered.data.regressors).cwiseAbs().maxCoeff() <= 1e-12);
    for (long c = 0; c < again.column_means.size(); ++c)
        CHECK(std::fabs(again.column_means[c]) <= 1e-12);
}

TEST_CASE("demean handles the simple example column") {
    Dataset d;
    d.regressor_names = {"a", "b"};
    d.regressors.resize(3, 2);
    d.regressors << 1, -1, 2, 0, 3, 1;
    d.responses.resize(3, 1);
    d.responses << 1, 2, 2;
    const DemeanResult r = demean_regressors(d);
    CHECK(r.column_means[0] == doctest::Approx(2.0));
    CHECK(r.data.regressors(0, 0) == doctest::Approx(-1.0));
    CHECK(r.data.regressors(2, 0) == doctest::Approx(1.0));
    CHECK(r.data.regressors(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("individual grids: boundary categories and interior arithmetic") {
    // single equation, three categories, cut-points (-1, 1.5)
    ModelSpec spec;
    spec.equations.push_back({"y", {"x"}, 3});
    Dataset data;
    data.regressor_names = {"x"};
    data.regressors.resize(3, 1);
    data.regressors << 0.0, 0.5, 0.0;
    data.responses.resize(3, 1);
    data.responses << 1, 2, 3;
    const Problem problem(spec, data);

    ParamSet params = ParamSet::zeros(spec);
    params.cutpoints[0] << -1.0, 1.5;

    SUBCASE("leftmost category is (-inf, nu1]") {
        params.beta[0][0] = 0.0;
        const Interval iv = individual_grid(problem, params, 0, 0);
        CHECK(iv.lower == -kInf);
        CHECK(iv.upper == doctest::Approx(-1.0));
    }
    SUBCASE("rightmost category is (nu_{J-1}, inf)") {
        const Interval iv = individual_grid(problem, params, 2, 0);
        CHECK(iv.lower == doctest::Approx(1.5));
        CHECK(iv.upper == kInf);
    }
    SUBCASE("interior category shifts by x'beta") {
        params.beta[0][0] = 1.0;  // index = 0.5
        const Interval iv = individual_grid(problem, params, 1, 0);
        CHECK(iv.lower == doctest::Approx(-1.5));
        CHECK(iv.upper == doctest::Approx(1.0));
    }
}

TEST_CASE("individual grids partition the line and are shift-invariant") {
    const GeneratedData gen = generate_5c(50, 4);
    const ModelSpec spec = config_5c().model_spec();
    const Problem problem(spec, gen.dataset);
    const DgpConfig cfg = config_5c();

    ParamSet params = ParamSet::zeros(spec);
    for (int k = 0; k < 4; ++k) {
        params.beta[static_cast<std::size_t>(k)] = cfg.equations[static_cast<std::size_t>(k)].coefficients;
        params.cutpoints[static_cast<std::size_t>(k)] = cfg.equations[static_cast<std::size_t>(k)].cutpoints;
    }

    // union over categories covers the line with no gaps
    Dataset probe = gen.dataset;
    for (int k = 0; k < 4; ++k) {
        const int j_count = spec.equations[static_cast<std::size_t>(k)].n_categories;
        double prev_upper = -kInf;
        for (int j = 1; j <= j_count; ++j) {
            probe.responses(0, k) = j;
            const Problem p2(spec, probe);
            const Interval iv = individual_grid(p2, params, 0, k);
            CHECK(iv.lower == prev_upper);
            prev_upper = iv.upper;
        }
        CHECK(prev_upper == kInf);
        probe.responses(0, k) = gen.dataset.responses(0, k);
    }

    // adding c to all cut-points and to the structural index leaves grids unchanged
    ParamSet shifted = params;
    const double c = 0.733;
    for (int k = 0; k < 4; ++k)
        shifted.cutpoints[static_cast<std::size_t>(k)].array() += c;
    for (long i = 0; i < 10; ++i) {
        for (int k = 0; k < 4; ++k) {
            const Interval a = individual_grid(problem, params, i, k);
            const double s = problem.index(params, i, k);
            const Interval b = individual_grid(problem, shifted, i, k);
            // shifted grid = original grid + c relative to the same index
            if (a.lower != -kInf) CHECK(b.lower - a.lower == doctest::Approx(c).epsilon(1e-12));
            if (a.upper != kInf) CHECK(b.upper - a.upper == doctest::Approx(c).epsilon(1e-12));
            (void)s;
        }
    }
}
