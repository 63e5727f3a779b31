#pragma once

// Solves the binarized cut-point equations: for each (equation, threshold)
// the mixture of under/upper residuals is strictly increasing in the
// cut-point, so a bracketed bisection is exact and cheap.

#include <vector>

#include <Eigen/Dense>

#include "coarsemom/residuals.hpp"

namespace coarsemom {

// (1/N) [ sum_{j_i <= j} lower + sum_{j_i > j} upper ] at threshold nu,
// holding the structural indices fixed.
inline double cut_moment_at(const Eigen::VectorXd& indices, const Eigen::VectorXi& responses,
                            int j, double nu) {
    struct Acc {
        double sum = 0.0;
    };
    const long n = indices.size();
    Acc total = parallel_reduce<Acc>(
        n,
        [&](long begin, long end, Acc& acc) {
            for (long i = begin; i < end; ++i)
                acc.sum += responses[i] <= j ? lower_residual(nu, indices[i])
                                             : upper_residual(nu, indices[i]);
        },
        [](Acc& into, const Acc& part) { into.sum += part.sum; });
    return total.sum / static_cast<double>(n);
}

inline double cut_moment(const Problem& problem, const std::vector<Eigen::VectorXd>& beta, int k,
                         int j, double nu) {
    const Eigen::VectorXd indices = problem.x(k) * beta[static_cast<std::size_t>(k)];
    return cut_moment_at(indices, problem.data().responses.col(k), j, nu);
}

struct CutSolveOptions {
    double moment_tolerance = 1e-13;
    double bracket_tolerance = 1e-13;
    double initial_half_width = 10.0;
    double max_half_width = 1e6;
};

// Root of the monotone cut moment in nu for one (k, j). The bracket is
// expanded geometrically until the moment changes sign.
inline double solve_cutpoint(const Eigen::VectorXd& indices, const Eigen::VectorXi& responses,
                             int j, const CutSolveOptions& opts = {}) {
    double lo = -opts.initial_half_width;
    double hi = opts.initial_half_width;
    double f_lo = cut_moment_at(indices, responses, j, lo);
    double f_hi = cut_moment_at(indices, responses, j, hi);
    // expand until the moment strictly changes sign; a one-sided sample only
    // approaches zero in a tail and must be reported, not "solved"
    while (!(f_lo < 0.0 && f_hi > 0.0)) {
        if (std::fabs(lo) > opts.max_half_width || std::fabs(hi) > opts.max_half_width)
            throw numeric_error("solve_cutpoint: no sign change; threshold " + std::to_string(j) +
                                " has no interior root");
        if (!(f_lo < 0.0)) {
            lo *= 2.0;
            f_lo = cut_moment_at(indices, responses, j, lo);
        }
        if (!(f_hi > 0.0)) {
            hi *= 2.0;
            f_hi = cut_moment_at(indices, responses, j, hi);
        }
    }
    while (hi - lo > opts.bracket_tolerance) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // bracket at machine resolution
        const double f_mid = cut_moment_at(indices, responses, j, mid);
        if (std::fabs(f_mid) <= opts.moment_tolerance) return mid;
        if (f_mid < 0.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// All cut-points at fixed coefficients. Roots are solved independently per
// threshold; the result must come out strictly ascending per equation.
inline std::vector<Eigen::VectorXd> solve_cutpoints(const Problem& problem,
                                                    const std::vector<Eigen::VectorXd>& beta,
                                                    const CutSolveOptions& opts = {}) {
    const int k_count = problem.n_equations();
    std::vector<Eigen::VectorXd> cuts(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k) {
        const Eigen::VectorXd indices = problem.x(k) * beta[static_cast<std::size_t>(k)];
        const Eigen::VectorXi responses = problem.data().responses.col(k);
        const int j_count = problem.spec().equations[static_cast<std::size_t>(k)].n_categories;
        Eigen::VectorXd nu(j_count - 1);
        for (int j = 1; j < j_count; ++j) nu[j - 1] = solve_cutpoint(indices, responses, j, opts);
        for (int j = 1; j < j_count - 1; ++j)
            if (!(nu[j - 1] < nu[j]))
                throw numeric_error("solve_cutpoints: thresholds " + std::to_string(j) + "," +
                                    std::to_string(j + 1) + " of equation " + std::to_string(k + 1) +
                                    " are not ascending");
        cuts[static_cast<std::size_t>(k)] = std::move(nu);
    }
    return cuts;
}

} // namespace coarsemom
