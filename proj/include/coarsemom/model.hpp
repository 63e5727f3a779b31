#pragma once

// Model specification, dataset container, validation, and the per-observation
// shifted interval grids consumed by every estimator.

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/gauss.hpp"

namespace coarsemom {

struct EquationSpec {
    std::string response_name;
    std::vector<std::string> regressor_names;
    int n_categories = 2;
};

// One tie group: a set of (equation index, regressor name) coefficients
// sharing a single free parameter. All members must name the same regressor.
using TieGroup = std::vector<std::pair<int, std::string>>;

struct ModelSpec {
    std::vector<EquationSpec> equations;
    std::vector<TieGroup> ties;

    int n_equations() const { return static_cast<int>(equations.size()); }
};

struct Dataset {
    std::vector<std::string> regressor_names;
    Eigen::MatrixXd regressors;  // N x n_columns
    Eigen::MatrixXi responses;   // N x K, entries in 1..J_k

    long n_obs() const { return regressors.rows(); }

    int column_index(const std::string& name) const {
        for (std::size_t c = 0; c < regressor_names.size(); ++c)
            if (regressor_names[c] == name) return static_cast<int>(c);
        return -1;
    }
};

// Coefficients are stored per equation, aligned with that equation's
// regressor list; tie groups are honored by keeping tied entries equal.
struct ParamSet {
    std::vector<Eigen::VectorXd> beta;       // K vectors, length M_k
    std::vector<Eigen::VectorXd> cutpoints;  // K vectors, length J_k - 1, ascending
    Eigen::MatrixXd between_cov;             // K x K

    static ParamSet zeros(const ModelSpec& spec) {
        ParamSet p;
        const int k_count = spec.n_equations();
        p.beta.resize(k_count);
        p.cutpoints.resize(k_count);
        for (int k = 0; k < k_count; ++k) {
            p.beta[k] = Eigen::VectorXd::Zero(static_cast<long>(spec.equations[k].regressor_names.size()));
            p.cutpoints[k] = Eigen::VectorXd::Zero(spec.equations[k].n_categories - 1);
        }
        p.between_cov = Eigen::MatrixXd::Identity(k_count, k_count);
        return p;
    }
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
    std::string summary() const {
        std::ostringstream out;
        for (const auto& v : violations) out << v << '\n';
        return out.str();
    }
};

// Scans everything and reports all violations; never aborts mid-scan.
inline ValidationReport validate(const ModelSpec& spec, const Dataset& data) {
    ValidationReport report;
    auto add = [&](const std::string& msg) { report.violations.push_back(msg); };

    const int k_count = spec.n_equations();
    if (k_count < 1) add("model has no equations");
    if (data.responses.cols() != k_count)
        add("response matrix has " + std::to_string(data.responses.cols()) +
            " columns, model has " + std::to_string(k_count) + " equations");
    if (data.regressors.cols() != static_cast<long>(data.regressor_names.size()))
        add("regressor matrix width does not match the column name list");

    for (int k = 0; k < k_count; ++k) {
        const auto& eq = spec.equations[k];
        if (eq.n_categories < 2)
            add("equation " + eq.response_name + ": fewer than 2 categories");
        if (eq.regressor_names.empty())
            add("equation " + eq.response_name + ": empty regressor list");
        std::set<std::string> seen;
        for (const auto& name : eq.regressor_names) {
            if (!seen.insert(name).second)
                add("equation " + eq.response_name + ": duplicate regressor " + name);
            if (data.column_index(name) < 0)
                add("equation " + eq.response_name + ": missing column " + name);
        }
    }

    for (std::size_t g = 0; g < spec.ties.size(); ++g) {
        const auto& group = spec.ties[g];
        std::string shared_name;
        for (const auto& [k, name] : group) {
            if (k < 0 || k >= k_count) {
                add("tie group " + std::to_string(g) + ": equation index out of range");
                continue;
            }
            if (shared_name.empty()) shared_name = name;
            else if (name != shared_name)
                add("tie group " + std::to_string(g) + ": mixes regressors " + shared_name +
                    " and " + name);
            bool found = false;
            for (const auto& rn : spec.equations[k].regressor_names)
                if (rn == name) found = true;
            if (!found)
                add("tie group " + std::to_string(g) + ": " + name + " not in equation " +
                    spec.equations[k].response_name);
        }
    }

    for (long c = 0; c < data.regressors.cols(); ++c) {
        if (!data.regressors.col(c).allFinite())
            add("column " + data.regressor_names[static_cast<std::size_t>(c)] + ": non-finite values");
        const double lo = data.regressors.col(c).minCoeff();
        const double hi = data.regressors.col(c).maxCoeff();
        if (lo == hi)
            add("column " + data.regressor_names[static_cast<std::size_t>(c)] +
                ": constant column (intercepts are not identified; remove it)");
    }

    if (data.responses.cols() == k_count) {
        for (int k = 0; k < k_count; ++k) {
            const int j_count = spec.equations[k].n_categories;
            std::vector<long> counts(static_cast<std::size_t>(j_count) + 1, 0);
            for (long i = 0; i < data.responses.rows(); ++i) {
                const int j = data.responses(i, k);
                if (j < 1 || j > j_count)
                    add("observation " + std::to_string(i) + ", equation " +
                        spec.equations[k].response_name + ": response " + std::to_string(j) +
                        " out of range 1.." + std::to_string(j_count));
                else
                    ++counts[static_cast<std::size_t>(j)];
            }
            for (int j = 1; j <= j_count; ++j)
                if (counts[static_cast<std::size_t>(j)] == 0)
                    add("equation " + spec.equations[k].response_name + ": category " +
                        std::to_string(j) + " unoccupied");
        }
    }

    return report;
}

struct DemeanResult {
    Dataset data;
    Eigen::VectorXd column_means;
};

inline DemeanResult demean_regressors(const Dataset& data) {
    DemeanResult out;
    out.data = data;
    out.column_means = data.regressors.colwise().mean();
    out.data.regressors.rowwise() -= out.column_means.transpose();
    return out;
}

// Binds a model to a dataset: per-equation regressor matrices (contiguous
// copies) and the stacked parameter layout. Immutable once built.
class Problem {
public:
    Problem(ModelSpec spec, Dataset data) : spec_(std::move(spec)), data_(std::move(data)) {
        const int k_count = spec_.n_equations();
        x_.resize(static_cast<std::size_t>(k_count));
        for (int k = 0; k < k_count; ++k) {
            const auto& names = spec_.equations[k].regressor_names;
            Eigen::MatrixXd xk(data_.n_obs(), static_cast<long>(names.size()));
            for (std::size_t m = 0; m < names.size(); ++m) {
                const int c = data_.column_index(names[m]);
                if (c < 0) throw std::invalid_argument("Problem: missing column " + names[m]);
                xk.col(static_cast<long>(m)) = data_.regressors.col(c);
            }
            x_[static_cast<std::size_t>(k)] = std::move(xk);
        }
    }

    const ModelSpec& spec() const { return spec_; }
    const Dataset& data() const { return data_; }
    long n_obs() const { return data_.n_obs(); }
    int n_equations() const { return spec_.n_equations(); }
    const Eigen::MatrixXd& x(int k) const { return x_[static_cast<std::size_t>(k)]; }

    double index(const ParamSet& params, long i, int k) const {
        return x_[static_cast<std::size_t>(k)].row(i).dot(params.beta[static_cast<std::size_t>(k)]);
    }

    int response(long i, int k) const { return data_.responses(i, k); }

private:
    ModelSpec spec_;
    Dataset data_;
    std::vector<Eigen::MatrixXd> x_;
};

// Unshifted category interval (nu_{j-1}, nu_j], with nu_0 = -inf, nu_J = +inf.
inline Interval category_interval(const Eigen::VectorXd& cutpoints, int j) {
    const int j_count = static_cast<int>(cutpoints.size()) + 1;
    Interval iv;
    iv.lower = j <= 1 ? -kInf : cutpoints[j - 2];
    iv.upper = j >= j_count ? kInf : cutpoints[j - 1];
    return iv;
}

// Observation i's individualized interval for its observed category:
// (nu_{j-1} - x'beta, nu_j - x'beta].
inline Interval individual_grid(const Problem& problem, const ParamSet& params, long i, int k) {
    const Interval iv = category_interval(params.cutpoints[static_cast<std::size_t>(k)],
                                          problem.response(i, k));
    const double s = problem.index(params, i, k);
    Interval out;
    out.lower = iv.lower == -kInf ? -kInf : iv.lower - s;
    out.upper = iv.upper == kInf ? kInf : iv.upper - s;
    return out;
}

} // namespace coarsemom
