#pragma once

// Deterministic synthetic data generation. Columns are built from a recipe
// (normal draws, discrete dummies, linear combinations plus noise), latent
// errors come from a Cholesky factor of the target correlation matrix, and
// responses are coarsened by fixed cut-point grids. Every value is a pure
// function of (config, n, seed).

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/model.hpp"
#include "coarsemom/parallel.hpp"
#include "coarsemom/rng.hpp"

namespace coarsemom {

struct ColumnSpec {
    enum class Kind { Normal, Discrete, Combo };

    std::string name;
    Kind kind = Kind::Normal;
    double sd = 1.0;                                       // Normal / Combo noise scale
    std::vector<double> values;                            // Discrete support, equiprobable
    std::vector<std::pair<std::string, double>> weights;   // Combo: prior column -> weight
    bool hidden = false;                                   // not exported as a regressor

    static ColumnSpec normal(std::string n, double sd_ = 1.0) {
        ColumnSpec c;
        c.name = std::move(n);
        c.kind = Kind::Normal;
        c.sd = sd_;
        return c;
    }
    static ColumnSpec discrete(std::string n, std::vector<double> vals, bool hidden_ = false) {
        ColumnSpec c;
        c.name = std::move(n);
        c.kind = Kind::Discrete;
        c.values = std::move(vals);
        c.hidden = hidden_;
        return c;
    }
    static ColumnSpec combo(std::string n, std::vector<std::pair<std::string, double>> w,
                            double noise_sd = 0.0) {
        ColumnSpec c;
        c.name = std::move(n);
        c.kind = Kind::Combo;
        c.weights = std::move(w);
        c.sd = noise_sd;
        return c;
    }
};

struct DgpEquation {
    std::string response_name;
    std::vector<std::string> regressor_names;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd cutpoints;  // ascending
};

struct DgpConfig {
    std::vector<ColumnSpec> columns;
    std::vector<DgpEquation> equations;
    Eigen::MatrixXd sigma;  // K x K error correlation, unit diagonal, PD

    int n_equations() const { return static_cast<int>(equations.size()); }

    ModelSpec model_spec() const {
        ModelSpec spec;
        for (const auto& eq : equations)
            spec.equations.push_back(
                {eq.response_name, eq.regressor_names, static_cast<int>(eq.cutpoints.size()) + 1});
        return spec;
    }
};

struct GeneratedData {
    Dataset dataset;
    Eigen::MatrixXd latent;  // N x K latent responses x'beta + eps
    Eigen::MatrixXd errors;  // N x K latent errors
};

// Coarsen a latent value: smallest j with y <= nu_j, J if above all cuts.
inline int coarsen(double y, const Eigen::VectorXd& cutpoints) {
    int j = 1;
    while (j <= cutpoints.size() && y > cutpoints[j - 1]) ++j;
    return j;
}

inline GeneratedData generate(const DgpConfig& config, long n, std::uint64_t seed) {
    const int k_count = config.n_equations();
    const int n_cols = static_cast<int>(config.columns.size());
    if (k_count < 1 || n < 1) throw std::invalid_argument("generate: need n >= 1 and K >= 1");

    Eigen::LLT<Eigen::MatrixXd> llt(config.sigma);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("generate: sigma is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    // Column name -> position, for combo recipes (prior columns only).
    std::map<std::string, int> position;
    for (int c = 0; c < n_cols; ++c) {
        const auto& col = config.columns[static_cast<std::size_t>(c)];
        if (position.count(col.name)) throw std::invalid_argument("generate: duplicate column " + col.name);
        if (col.kind == ColumnSpec::Kind::Combo)
            for (const auto& [dep, w] : col.weights)
                if (!position.count(dep))
                    throw std::invalid_argument("generate: combo column " + col.name +
                                                " references undefined column " + dep);
        position[col.name] = c;
    }

    Eigen::MatrixXd all_cols(n, n_cols);
    Eigen::MatrixXd errors(n, k_count);
    Eigen::MatrixXd latent(n, k_count);

    // Streams: one per recipe column, then one per error coordinate.
    parallel_for(n, [&](long begin, long end) {
        Eigen::VectorXd z(k_count);
        for (long i = begin; i < end; ++i) {
            for (int c = 0; c < n_cols; ++c) {
                const auto& col = config.columns[static_cast<std::size_t>(c)];
                CounterRng rng(seed, static_cast<std::uint64_t>(c));
                double v = 0.0;
                switch (col.kind) {
                    case ColumnSpec::Kind::Normal:
                        v = col.sd * rng.normal(static_cast<std::uint64_t>(i));
                        break;
                    case ColumnSpec::Kind::Discrete:
                        v = col.values[static_cast<std::size_t>(
                            rng.pick(static_cast<std::uint64_t>(i),
                                     static_cast<int>(col.values.size())))];
                        break;
                    case ColumnSpec::Kind::Combo:
                        for (const auto& [dep, w] : col.weights)
                            v += w * all_cols(i, position.at(dep));
                        if (col.sd != 0.0) v += col.sd * rng.normal(static_cast<std::uint64_t>(i));
                        break;
                }
                all_cols(i, c) = v;
            }
            for (int k = 0; k < k_count; ++k) {
                CounterRng rng(seed, static_cast<std::uint64_t>(n_cols + k));
                z[k] = rng.normal(static_cast<std::uint64_t>(i));
            }
            errors.row(i) = (chol * z).transpose();
        }
    });

    GeneratedData out;
    out.errors = std::move(errors);
    out.latent = std::move(latent);

    std::vector<std::string> visible_names;
    std::vector<int> visible_cols;
    for (int c = 0; c < n_cols; ++c) {
        if (config.columns[static_cast<std::size_t>(c)].hidden) continue;
        visible_names.push_back(config.columns[static_cast<std::size_t>(c)].name);
        visible_cols.push_back(c);
    }
    out.dataset.regressor_names = visible_names;
    out.dataset.regressors.resize(n, static_cast<long>(visible_cols.size()));
    for (std::size_t v = 0; v < visible_cols.size(); ++v)
        out.dataset.regressors.col(static_cast<long>(v)) = all_cols.col(visible_cols[v]);

    out.dataset.responses.resize(n, k_count);
    for (int k = 0; k < k_count; ++k) {
        const auto& eq = config.equations[static_cast<std::size_t>(k)];
        Eigen::VectorXd index = Eigen::VectorXd::Zero(n);
        for (std::size_t m = 0; m < eq.regressor_names.size(); ++m) {
            const auto it = position.find(eq.regressor_names[m]);
            if (it == position.end())
                throw std::invalid_argument("generate: equation " + eq.response_name +
                                            " references undefined column " + eq.regressor_names[m]);
            index += eq.coefficients[static_cast<long>(m)] * all_cols.col(it->second);
        }
        for (long i = 0; i < n; ++i) {
            const double y = index[i] + out.errors(i, k);
            out.latent(i, k) = y;
            out.dataset.responses(i, k) = coarsen(y, eq.cutpoints);
        }
    }
    return out;
}

// The built-in four-equation benchmark generator ("5c"): four correlated,
// deliberately non-normal regressors, four latent equations with known
// coefficients, and mixed category counts J = (2, 3, 3, 4).
inline DgpConfig config_5c() {
    DgpConfig cfg;
    cfg.columns = {
        ColumnSpec::normal("x1", 1.0),
        ColumnSpec::discrete("d1", {-1.0, 1.0}, /*hidden=*/true),
        ColumnSpec::combo("x2", {{"x1", 0.5}, {"d1", 1.0}}),
        ColumnSpec::combo("x3", {{"x2", 0.5}}, /*noise_sd=*/2.0),
        ColumnSpec::discrete("d2", {-1.0, 0.0, 1.0}, /*hidden=*/true),
        ColumnSpec::combo("x4", {{"x3", -0.5}, {"d2", 1.0}}),
    };

    const std::vector<std::string> regs = {"x1", "x2", "x3", "x4"};
    auto eq = [&](std::string name, std::initializer_list<double> coefs,
                  std::initializer_list<double> cuts) {
        DgpEquation e;
        e.response_name = std::move(name);
        e.regressor_names = regs;
        e.coefficients = Eigen::VectorXd::Zero(4);
        int m = 0;
        for (double c : coefs) e.coefficients[m++] = c;
        e.cutpoints = Eigen::VectorXd::Zero(static_cast<long>(cuts.size()));
        int j = 0;
        for (double c : cuts) e.cutpoints[j++] = c;
        return e;
    };
    cfg.equations = {
        eq("y1", {1.0, 1.0, 1.0, 1.0}, {0.0}),
        eq("y2", {1.0, 2.0, 3.0, 4.0}, {-1.0, 1.5}),
        eq("y3", {-1.0, 2.0, -3.0, 4.0}, {-1.0, 0.5}),
        eq("y4", {-1.0, 0.5, -1.0, 1.0}, {-1.5, -0.5, 1.0}),
    };

    cfg.sigma.resize(4, 4);
    cfg.sigma << 1.0, 0.5, -0.5, 0.2,
                 0.5, 1.0, 0.3, 0.6,
                -0.5, 0.3, 1.0, -0.1,
                 0.2, 0.6, -0.1, 1.0;
    return cfg;
}

inline GeneratedData generate_5c(long n, std::uint64_t seed) {
    return generate(config_5c(), n, seed);
}

} // namespace coarsemom
