#pragma once

// Estimating-equation ingredients: generalized residuals, binarized
// under/upper residuals, the stacked parameter layout, and per-observation
// moment vectors.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/model.hpp"
#include "coarsemom/parallel.hpp"

namespace coarsemom {

// Stacked layout of the exactly identified moment system: P coefficient
// groups (after tying) followed by Q = sum_k (J_k - 1) cut-point slots.
class MomentLayout {
public:
    explicit MomentLayout(const ModelSpec& spec) {
        const int k_count = spec.n_equations();
        group_of_.resize(static_cast<std::size_t>(k_count));

        std::vector<int> tie_slot(spec.ties.size(), -1);
        for (int k = 0; k < k_count; ++k) {
            const auto& names = spec.equations[k].regressor_names;
            group_of_[static_cast<std::size_t>(k)].assign(names.size(), -1);
            for (std::size_t m = 0; m < names.size(); ++m) {
                int tie = -1;
                for (std::size_t g = 0; g < spec.ties.size(); ++g)
                    for (const auto& [tk, tname] : spec.ties[g])
                        if (tk == k && tname == names[m]) tie = static_cast<int>(g);
                if (tie >= 0 && tie_slot[static_cast<std::size_t>(tie)] >= 0) {
                    const int slot = tie_slot[static_cast<std::size_t>(tie)];
                    group_of_[static_cast<std::size_t>(k)][m] = slot;
                    members_[static_cast<std::size_t>(slot)].emplace_back(k, static_cast<int>(m));
                    continue;
                }
                const int slot = static_cast<int>(members_.size());
                members_.push_back({{k, static_cast<int>(m)}});
                group_of_[static_cast<std::size_t>(k)][m] = slot;
                if (tie >= 0) {
                    tie_slot[static_cast<std::size_t>(tie)] = slot;
                    labels_.push_back(names[m] + " (tied)");
                } else {
                    labels_.push_back("Eq." + spec.equations[k].response_name + ": " + names[m]);
                }
            }
        }

        cut_offset_.resize(static_cast<std::size_t>(k_count));
        int q = 0;
        for (int k = 0; k < k_count; ++k) {
            cut_offset_[static_cast<std::size_t>(k)] = q;
            q += spec.equations[k].n_categories - 1;
            for (int j = 1; j < spec.equations[k].n_categories; ++j)
                labels_.push_back("Eq." + spec.equations[k].response_name + ": cutp. " +
                                  std::to_string(j));
        }
        n_cut_ = q;
    }

    int n_beta() const { return static_cast<int>(members_.size()); }
    int n_cut() const { return n_cut_; }
    int total() const { return n_beta() + n_cut_; }

    int beta_slot(int k, int m) const { return group_of_[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)]; }
    int cut_slot(int k, int j) const { return n_beta() + cut_offset_[static_cast<std::size_t>(k)] + (j - 1); }
    const std::vector<std::pair<int, int>>& group_members(int slot) const {
        return members_[static_cast<std::size_t>(slot)];
    }
    const std::string& label(int slot) const { return labels_[static_cast<std::size_t>(slot)]; }

    Eigen::VectorXd pack(const ParamSet& params) const {
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(total());
        for (int g = 0; g < n_beta(); ++g) {
            const auto& [k, m] = members_[static_cast<std::size_t>(g)].front();
            theta[g] = params.beta[static_cast<std::size_t>(k)][m];
        }
        for (std::size_t k = 0; k < params.cutpoints.size(); ++k)
            for (int j = 1; j <= params.cutpoints[k].size(); ++j)
                theta[cut_slot(static_cast<int>(k), j)] = params.cutpoints[k][j - 1];
        return theta;
    }

    // Writes theta back into params, duplicating tied coefficients.
    void unpack(const Eigen::VectorXd& theta, ParamSet& params) const {
        for (int g = 0; g < n_beta(); ++g)
            for (const auto& [k, m] : members_[static_cast<std::size_t>(g)])
                params.beta[static_cast<std::size_t>(k)][m] = theta[g];
        for (std::size_t k = 0; k < params.cutpoints.size(); ++k)
            for (int j = 1; j <= params.cutpoints[k].size(); ++j)
                params.cutpoints[k][j - 1] = theta[cut_slot(static_cast<int>(k), j)];
    }

private:
    std::vector<std::vector<std::pair<int, int>>> members_;  // slot -> (k, m) list
    std::vector<std::vector<int>> group_of_;                 // [k][m] -> slot
    std::vector<int> cut_offset_;
    std::vector<std::string> labels_;
    int n_cut_ = 0;
};

// E(eps | observed cell) under the current parameters.
inline double generalized_residual(const Problem& problem, const ParamSet& params, long i, int k) {
    try {
        return trunc_mean(individual_grid(problem, params, i, k), 0.0);
    } catch (const degenerate_cell_error&) {
        throw degenerate_cell_error(
            "generalized residual: zero-mass cell at observation " + std::to_string(i) +
                ", equation " + std::to_string(k + 1) + ", category " +
                std::to_string(problem.response(i, k)),
            i, k, problem.response(i, k));
    }
}

// Binarized residuals at threshold cut for structural index value:
// lower = E(eps | eps <= c) < 0, upper = E(eps | eps > c) > 0, c = cut - index.
inline double lower_residual(double cut, double index) {
    const double c = cut - index;
    const double mass = std_cdf(c);
    if (!(mass >= kDegenerateMass))
        throw degenerate_cell_error("lower_residual: tail mass below 1e-300");
    return -std_pdf(c) / mass;
}

inline double upper_residual(double cut, double index) {
    const double c = cut - index;
    const double mass = std_ccdf(c);
    if (!(mass >= kDegenerateMass))
        throw degenerate_cell_error("upper_residual: tail mass below 1e-300");
    return std_pdf(c) / mass;
}

// d/d(cut) of the binarized residuals; both are strictly positive, which is
// what makes each cut-point equation monotone.
inline double lower_residual_dcut(double cut, double index) {
    const double c = cut - index;
    const double mass = std_cdf(c);
    if (!(mass >= kDegenerateMass))
        throw degenerate_cell_error("lower_residual_dcut: tail mass below 1e-300");
    const double p = std_pdf(c);
    const double r = p / mass;
    return r * (c + r);
}

inline double upper_residual_dcut(double cut, double index) {
    const double c = cut - index;
    const double mass = std_ccdf(c);
    if (!(mass >= kDegenerateMass))
        throw degenerate_cell_error("upper_residual_dcut: tail mass below 1e-300");
    const double p = std_pdf(c);
    const double r = p / mass;
    return r * (r - c);
}

// K-vector of generalized residuals for observation i.
inline void residual_vector(const Problem& problem, const ParamSet& params, long i,
                            Eigen::VectorXd& out) {
    const int k_count = problem.n_equations();
    out.resize(k_count);
    for (int k = 0; k < k_count; ++k) out[k] = generalized_residual(problem, params, i, k);
}

// Per-observation stacked moment vector. weight = between_cov^{-1}; only the
// coefficient block carries the weight, the cut-point block does not.
inline void moment_vector(const Problem& problem, const ParamSet& params,
                          const MomentLayout& layout, const Eigen::MatrixXd& weight, long i,
                          Eigen::VectorXd& out) {
    const int k_count = problem.n_equations();
    Eigen::VectorXd ebar(k_count);
    residual_vector(problem, params, i, ebar);
    const Eigen::VectorXd w = weight * ebar;

    out.setZero(layout.total());
    for (int k = 0; k < k_count; ++k) {
        const auto& xk = problem.x(k);
        for (int m = 0; m < xk.cols(); ++m)
            out[layout.beta_slot(k, m)] += xk(i, m) * w[k];

        const double s = problem.index(params, i, k);
        const int observed = problem.response(i, k);
        const auto& nu = params.cutpoints[static_cast<std::size_t>(k)];
        for (int j = 1; j <= nu.size(); ++j)
            out[layout.cut_slot(k, j)] =
                observed <= j ? lower_residual(nu[j - 1], s) : upper_residual(nu[j - 1], s);
    }
}

// (1/N) sum_i of the per-observation moment vectors.
inline Eigen::VectorXd averaged_moments(const Problem& problem, const ParamSet& params,
                                        const MomentLayout& layout, const Eigen::MatrixXd& weight) {
    struct Acc {
        Eigen::VectorXd sum;
    };
    const int dim = layout.total();
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            acc.sum.setZero(dim);
            Eigen::VectorXd g(dim);
            for (long i = begin; i < end; ++i) {
                moment_vector(problem, params, layout, weight, i, g);
                acc.sum += g;
            }
        },
        [&](Acc& into, const Acc& part) {
            if (into.sum.size() == 0) into.sum.setZero(dim);
            if (part.sum.size() != 0) into.sum += part.sum;
        });
    if (total.sum.size() == 0) total.sum.setZero(dim);
    return total.sum / static_cast<double>(problem.n_obs());
}

} // namespace coarsemom
