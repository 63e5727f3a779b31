#pragma once

// Recovers the latent error correlation matrix from the in-between residual
// covariance, pairwise: for each pair of equations, find the latent rho whose
// implied average product of per-cell truncated means matches the observed
// in-between covariance. The map rho -> implied covariance is evaluated
// either exactly (2-D cell probabilities) or by seeded Monte Carlo with
// common random numbers, and inverted by bisection.

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/gmm.hpp"
#include "coarsemom/rng.hpp"

namespace coarsemom {

// One observation's pair of individualized grids: shifted interior
// boundaries plus the marginal truncated mean of every cell.
struct PairGridObs {
    Eigen::VectorXd bounds1, bounds2;  // lengths J1-1, J2-1, ascending
    Eigen::VectorXd means1, means2;    // lengths J1, J2
};

using PairGrids = std::vector<PairGridObs>;

namespace detail {

// Marginal cell mean; a cell whose mass underflows carries zero probability
// in every product it enters, so its mean is irrelevant and set to zero.
inline double cell_mean_or_zero(const Interval& cell) {
    if (!(interval_mass(cell.lower, cell.upper) >= kDegenerateMass)) return 0.0;
    return trunc_mean(cell, 0.0);
}

} // namespace detail

inline PairGridObs make_pair_grid(const Eigen::VectorXd& cuts1, double shift1,
                                  const Eigen::VectorXd& cuts2, double shift2) {
    PairGridObs g;
    g.bounds1 = cuts1.array() - shift1;
    g.bounds2 = cuts2.array() - shift2;
    g.means1.resize(cuts1.size() + 1);
    g.means2.resize(cuts2.size() + 1);
    for (int j = 1; j <= cuts1.size() + 1; ++j)
        g.means1[j - 1] = detail::cell_mean_or_zero(category_interval(g.bounds1, j));
    for (int j = 1; j <= cuts2.size() + 1; ++j)
        g.means2[j - 1] = detail::cell_mean_or_zero(category_interval(g.bounds2, j));
    return g;
}

// Grids for an equation pair under fitted parameters.
inline PairGrids pair_grids(const Problem& problem, const ParamSet& params, int k1, int k2) {
    PairGrids grids(static_cast<std::size_t>(problem.n_obs()));
    const auto& cuts1 = params.cutpoints[static_cast<std::size_t>(k1)];
    const auto& cuts2 = params.cutpoints[static_cast<std::size_t>(k2)];
    parallel_for(problem.n_obs(), [&](long begin, long end) {
        for (long i = begin; i < end; ++i)
            grids[static_cast<std::size_t>(i)] = make_pair_grid(
                cuts1, problem.index(params, i, k1), cuts2, problem.index(params, i, k2));
    });
    return grids;
}

// Exact implied in-between covariance: per observation, the sum of
// 2-D cell probabilities times the two marginal cell means.
inline double exact_between_cov(const PairGrids& grids, double rho) {
    if (!(std::fabs(rho) < 1.0)) throw std::domain_error("exact_between_cov: |rho| must be < 1");
    struct Acc {
        double sum = 0.0;
    };
    Acc total = parallel_reduce<Acc>(
        static_cast<long>(grids.size()),
        [&](long begin, long end, Acc& acc) {
            for (long i = begin; i < end; ++i) {
                const PairGridObs& g = grids[static_cast<std::size_t>(i)];
                const int j1_count = static_cast<int>(g.means1.size());
                const int j2_count = static_cast<int>(g.means2.size());
                // corner CDFs; index 0 = -inf, index J = +inf
                Eigen::MatrixXd corner(j1_count + 1, j2_count + 1);
                for (int p = 0; p <= j1_count; ++p) {
                    const double x = p == 0 ? -kInf : (p == j1_count ? kInf : g.bounds1[p - 1]);
                    for (int q = 0; q <= j2_count; ++q) {
                        const double y = q == 0 ? -kInf : (q == j2_count ? kInf : g.bounds2[q - 1]);
                        corner(p, q) = bvn_cdf(x, y, rho);
                    }
                }
                double value = 0.0;
                for (int j1 = 1; j1 <= j1_count; ++j1)
                    for (int j2 = 1; j2 <= j2_count; ++j2) {
                        const double p_cell = corner(j1, j2) - corner(j1 - 1, j2) -
                                              corner(j1, j2 - 1) + corner(j1 - 1, j2 - 1);
                        if (p_cell > 0.0)
                            value += p_cell * g.means1[j1 - 1] * g.means2[j2 - 1];
                    }
                acc.sum += value;
            }
        },
        [](Acc& into, const Acc& part) { into.sum += part.sum; });
    return total.sum / static_cast<double>(grids.size());
}

// Monte Carlo implied in-between covariance: draw standard normal pairs with
// the requested correlation through the triangular construction
// eps2 = rho*eps1 + sqrt(1-rho^2)*eta, assign each draw to its cell, and
// average the products of the two cell means. The same seed across rho
// evaluations yields common random numbers.
inline double simulate_between_cov(const PairGrids& grids, double rho, long n_draws_per_obs,
                                   std::uint64_t seed) {
    if (!(std::fabs(rho) < 1.0)) throw std::domain_error("simulate_between_cov: |rho| must be < 1");
    const double mix = std::sqrt(1.0 - rho * rho);
    const CounterRng rng(seed, 0);
    auto cell_of = [](const Eigen::VectorXd& bounds, double value) {
        int j = 0;
        while (j < bounds.size() && value > bounds[j]) ++j;
        return j;
    };
    struct Acc {
        double sum = 0.0;
    };
    const long n_obs = static_cast<long>(grids.size());
    Acc total = parallel_reduce<Acc>(
        n_obs,
        [&](long begin, long end, Acc& acc) {
            for (long i = begin; i < end; ++i) {
                const PairGridObs& g = grids[static_cast<std::size_t>(i)];
                double obs_sum = 0.0;
                for (long t = 0; t < n_draws_per_obs; ++t) {
                    const std::uint64_t base =
                        2 * (static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n_draws_per_obs) +
                             static_cast<std::uint64_t>(t));
                    const double e1 = rng.normal(base);
                    const double e2 = rho * e1 + mix * rng.normal(base + 1);
                    obs_sum += g.means1[cell_of(g.bounds1, e1)] * g.means2[cell_of(g.bounds2, e2)];
                }
                acc.sum += obs_sum / static_cast<double>(n_draws_per_obs);
            }
        },
        [](Acc& into, const Acc& part) { into.sum += part.sum; });
    return total.sum / static_cast<double>(n_obs);
}

struct MatchOptions {
    bool exact = true;
    long n_draws_per_obs = 10000;  // Monte Carlo mode only
    std::uint64_t seed = 1;
    double f_tolerance = 5e-4;       // early stop in Monte Carlo mode
    double bracket_tolerance = 1e-6;
    double boundary_delta = 1e-4;
};

struct MatchResult {
    double rho_hat = 0.0;
    double target_between = 0.0;
    double achieved_between = 0.0;
    long n_draws = 0;
    int bracket_iterations = 0;
    bool attainable = true;
};

inline MatchResult match_rho(const PairGrids& grids, double target_between,
                             const MatchOptions& opts = {}) {
    auto f = [&](double rho) {
        return opts.exact ? exact_between_cov(grids, rho)
                          : simulate_between_cov(grids, rho, opts.n_draws_per_obs, opts.seed);
    };
    MatchResult result;
    result.target_between = target_between;
    result.n_draws = opts.exact ? 0 : opts.n_draws_per_obs;

    double lo = -1.0 + opts.boundary_delta;
    double hi = 1.0 - opts.boundary_delta;
    const double f_lo = f(lo);
    const double f_hi = f(hi);
    if (target_between <= f_lo || target_between >= f_hi) {
        result.attainable = false;
        result.rho_hat = target_between <= f_lo ? lo : hi;
        result.achieved_between = target_between <= f_lo ? f_lo : f_hi;
        return result;
    }
    double mid = 0.0;
    double f_mid = 0.0;
    while (hi - lo > opts.bracket_tolerance) {
        mid = 0.5 * (lo + hi);
        f_mid = f(mid);
        ++result.bracket_iterations;
        if (!opts.exact && std::fabs(f_mid - target_between) <= opts.f_tolerance) break;
        if (f_mid < target_between) lo = mid;
        else hi = mid;
        mid = 0.5 * (lo + hi);
    }
    result.rho_hat = mid;
    result.achieved_between = f(mid);
    return result;
}

struct LatentCov {
    Eigen::MatrixXd correlation;  // K x K, unit diagonal
    std::vector<std::pair<int, int>> pair_index;
    std::vector<MatchResult> pair_results;
    bool all_matched = true;
    double min_eigenvalue = 0.0;
    bool positive_semidefinite = true;
};

// Pairwise recovery for every off-diagonal entry of the in-between
// covariance; the matrix is reported raw, with a PSD diagnostic, since
// pairwise matching does not guarantee positive semidefiniteness.
inline LatentCov full_correlation_matrix(const Problem& problem, const FitResult& fit,
                                         const MatchOptions& opts = {}) {
    const int k_count = problem.n_equations();
    LatentCov out;
    out.correlation = Eigen::MatrixXd::Identity(k_count, k_count);
    for (int k1 = 0; k1 < k_count; ++k1) {
        for (int k2 = k1 + 1; k2 < k_count; ++k2) {
            const PairGrids grids = pair_grids(problem, fit.params, k1, k2);
            const MatchResult match = match_rho(grids, fit.between_cov(k1, k2), opts);
            out.correlation(k1, k2) = out.correlation(k2, k1) = match.rho_hat;
            out.pair_index.emplace_back(k1, k2);
            out.pair_results.push_back(match);
            if (!match.attainable) out.all_matched = false;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.correlation);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    out.positive_semidefinite = out.min_eigenvalue >= -1e-10;
    return out;
}

inline LatentCov full_correlation_matrix(const ModelSpec& spec, const Dataset& data,
                                         const FitResult& fit, const MatchOptions& opts = {}) {
    return full_correlation_matrix(Problem(spec, data), fit, opts);
}

} // namespace coarsemom
