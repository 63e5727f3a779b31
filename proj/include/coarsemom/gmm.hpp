#pragma once

// The iterative estimator: starting from beta = 0 and closed-form quantile
// cut-points, alternate cut-point solves with Newton solves of the weighted
// coefficient system, first under an identity weight (the per-equation
// ordered-probit stage), then re-weighting with the inverse in-between
// residual covariance until the joint system is stationary. Standard errors
// come from the exactly identified GMM sandwich.

#include <chrono>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/cutpoints.hpp"
#include "coarsemom/residuals.hpp"

namespace coarsemom {

// Weighting is fixed: identity first (the per-equation ordered-probit
// stage), then the estimated inverse in-between covariance. The whole fit is
// deterministic; there is no seed.
struct FitOptions {
    int max_outer_iterations = 100;
    double param_tolerance = 1e-8;    // max-abs change across all parameters
    double moment_tolerance = 1e-10;  // inf-norm of the averaged moment vector
    double jacobian_step = 1e-6;      // relative step for the sandwich Jacobian
    int max_inner_alternations = 200;
    int max_newton_iterations = 60;
    bool compute_sandwich = true;
};

struct FitResult {
    ParamSet params;
    Eigen::VectorXd estimates;  // packed (beta block, cut block)
    Eigen::VectorXd se;
    Eigen::VectorXd z;
    Eigen::MatrixXd sandwich_cov;
    Eigen::MatrixXd between_cov;
    int n_iterations = 0;
    bool converged = false;
    double moment_norm_final = 0.0;
    std::vector<std::string> labels;

    ParamSet first_stage;  // identity-weight estimates (per-equation ordered probit)
    double seconds_first_stage = 0.0;
    double seconds_second_stage = 0.0;
    double seconds_sandwich = 0.0;
};

// Closed-form quantile cut-points at beta = 0: nu_{k,j} = Phi^{-1}(share <= j).
inline std::vector<Eigen::VectorXd> start_cutpoints(const Problem& problem) {
    const int k_count = problem.n_equations();
    const double n = static_cast<double>(problem.n_obs());
    std::vector<Eigen::VectorXd> cuts(static_cast<std::size_t>(k_count));
    for (int k = 0; k < k_count; ++k) {
        const int j_count = problem.spec().equations[static_cast<std::size_t>(k)].n_categories;
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(j_count);
        for (long i = 0; i < problem.n_obs(); ++i) counts[problem.response(i, k) - 1] += 1.0;
        Eigen::VectorXd nu(j_count - 1);
        double cum = 0.0;
        for (int j = 1; j < j_count; ++j) {
            cum += counts[j - 1];
            nu[j - 1] = std_quantile(cum / n);
        }
        cuts[static_cast<std::size_t>(k)] = nu;
    }
    return cuts;
}

// (1/N) sum_i ebar_i ebar_i' over generalized-residual vectors.
inline Eigen::MatrixXd estimate_between_cov(const Problem& problem, const ParamSet& params) {
    const int k_count = problem.n_equations();
    struct Acc {
        Eigen::MatrixXd sum;
    };
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            acc.sum.setZero(k_count, k_count);
            Eigen::VectorXd ebar(k_count);
            for (long i = begin; i < end; ++i) {
                residual_vector(problem, params, i, ebar);
                acc.sum.selfadjointView<Eigen::Lower>().rankUpdate(ebar);
            }
        },
        [&](Acc& into, const Acc& part) {
            if (into.sum.size() == 0) into.sum.setZero(k_count, k_count);
            if (part.sum.size() != 0) into.sum += part.sum;
        });
    if (total.sum.size() == 0) total.sum.setZero(k_count, k_count);
    Eigen::MatrixXd cov = total.sum.selfadjointView<Eigen::Lower>();
    return cov / static_cast<double>(problem.n_obs());
}

namespace detail {

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw numeric_error(std::string(what) + ": matrix is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

struct BetaSystem {
    Eigen::VectorXd moments;   // P
    Eigen::MatrixXd jacobian;  // P x P
};

// Weighted coefficient moments and their analytic Jacobian at fixed cuts.
inline BetaSystem assemble_beta_system(const Problem& problem, const ParamSet& params,
                                       const MomentLayout& layout, const Eigen::MatrixXd& weight,
                                       bool with_jacobian) {
    const int k_count = problem.n_equations();
    const int p = layout.n_beta();
    struct Acc {
        Eigen::VectorXd m;
        Eigen::MatrixXd j;
    };
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            acc.m.setZero(p);
            acc.j.setZero(with_jacobian ? p : 0, with_jacobian ? p : 0);
            Eigen::VectorXd ebar(k_count), dshift(k_count);
            for (long i = begin; i < end; ++i) {
                for (int k = 0; k < k_count; ++k) {
                    const Interval cell = individual_grid(problem, params, i, k);
                    try {
                        ebar[k] = trunc_mean(cell, 0.0);
                        if (with_jacobian) dshift[k] = trunc_mean_dshift(cell, 0.0);
                    } catch (const degenerate_cell_error&) {
                        throw degenerate_cell_error(
                            "beta system: zero-mass cell at observation " + std::to_string(i) +
                                ", equation " + std::to_string(k + 1) + ", category " +
                                std::to_string(problem.response(i, k)),
                            i, k, problem.response(i, k));
                    }
                }
                const Eigen::VectorXd w = weight * ebar;
                for (int k = 0; k < k_count; ++k) {
                    const auto& xk = problem.x(k);
                    for (int m = 0; m < xk.cols(); ++m)
                        acc.m[layout.beta_slot(k, m)] += xk(i, m) * w[k];
                }
                if (!with_jacobian) continue;
                for (int k = 0; k < k_count; ++k) {
                    const auto& xk = problem.x(k);
                    for (int kp = 0; kp < k_count; ++kp) {
                        const double c = weight(k, kp) * dshift[kp];
                        if (c == 0.0) continue;
                        const auto& xkp = problem.x(kp);
                        for (int m = 0; m < xk.cols(); ++m) {
                            const double xc = xk(i, m) * c;
                            const int g = layout.beta_slot(k, m);
                            for (int mp = 0; mp < xkp.cols(); ++mp)
                                acc.j(g, layout.beta_slot(kp, mp)) += xc * xkp(i, mp);
                        }
                    }
                }
            }
        },
        [&](Acc& into, const Acc& part) {
            if (into.m.size() == 0) {
                into.m.setZero(p);
                into.j.setZero(with_jacobian ? p : 0, with_jacobian ? p : 0);
            }
            if (part.m.size() != 0) {
                into.m += part.m;
                if (with_jacobian) into.j += part.j;
            }
        });
    if (total.m.size() == 0) {
        total.m.setZero(p);
        total.j.setZero(with_jacobian ? p : 0, with_jacobian ? p : 0);
    }
    const double n = static_cast<double>(problem.n_obs());
    return {total.m / n, with_jacobian ? Eigen::MatrixXd(total.j / n) : Eigen::MatrixXd()};
}

struct FullSystem {
    Eigen::VectorXd moments;   // P+Q
    Eigen::MatrixXd jacobian;  // (P+Q) x (P+Q)
};

// Averaged moment vector and full analytic Jacobian, both blocks.
inline FullSystem assemble_full_system(const Problem& problem, const ParamSet& params,
                                       const MomentLayout& layout, const Eigen::MatrixXd& weight) {
    const int k_count = problem.n_equations();
    const int dim = layout.total();
    struct Acc {
        Eigen::VectorXd m;
        Eigen::MatrixXd j;
    };
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            acc.m.setZero(dim);
            acc.j.setZero(dim, dim);
            Eigen::VectorXd ebar(k_count), dshift(k_count);
            Eigen::VectorXd dlo(k_count), dhi(k_count);  // d ebar / d (cell boundary nu)
            std::vector<int> lo_slot(static_cast<std::size_t>(k_count));
            std::vector<int> hi_slot(static_cast<std::size_t>(k_count));
            for (long i = begin; i < end; ++i) {
                for (int k = 0; k < k_count; ++k) {
                    const int observed = problem.response(i, k);
                    const auto& nu = params.cutpoints[static_cast<std::size_t>(k)];
                    const Interval cell = individual_grid(problem, params, i, k);
                    const double mass = interval_mass(cell.lower, cell.upper);
                    if (!(mass >= kDegenerateMass))
                        throw degenerate_cell_error(
                            "full system: zero-mass cell at observation " + std::to_string(i), i, k,
                            observed);
                    const double pa = std_pdf(cell.lower);
                    const double pb = std_pdf(cell.upper);
                    const double e = (pa - pb) / mass;
                    ebar[k] = e;
                    dlo[k] = observed >= 2 ? pa * (e - cell.lower) / mass : 0.0;
                    dhi[k] = observed <= nu.size() ? pb * (cell.upper - e) / mass : 0.0;
                    lo_slot[static_cast<std::size_t>(k)] =
                        observed >= 2 ? layout.cut_slot(k, observed - 1) : -1;
                    hi_slot[static_cast<std::size_t>(k)] =
                        observed <= nu.size() ? layout.cut_slot(k, observed) : -1;
                    dshift[k] = -(dlo[k] + dhi[k]);
                }
                const Eigen::VectorXd w = weight * ebar;
                for (int k = 0; k < k_count; ++k) {
                    const auto& xk = problem.x(k);
                    for (int m = 0; m < xk.cols(); ++m) {
                        const int g = layout.beta_slot(k, m);
                        const double x = xk(i, m);
                        acc.m[g] += x * w[k];
                        for (int kp = 0; kp < k_count; ++kp) {
                            const double wk = weight(k, kp);
                            if (wk == 0.0) continue;
                            const auto& xkp = problem.x(kp);
                            const double xc = x * wk * dshift[kp];
                            for (int mp = 0; mp < xkp.cols(); ++mp)
                                acc.j(g, layout.beta_slot(kp, mp)) += xc * xkp(i, mp);
                            if (lo_slot[static_cast<std::size_t>(kp)] >= 0)
                                acc.j(g, lo_slot[static_cast<std::size_t>(kp)]) += x * wk * dlo[kp];
                            if (hi_slot[static_cast<std::size_t>(kp)] >= 0)
                                acc.j(g, hi_slot[static_cast<std::size_t>(kp)]) += x * wk * dhi[kp];
                        }
                    }
                }
                for (int k = 0; k < k_count; ++k) {
                    const double s = problem.index(params, i, k);
                    const int observed = problem.response(i, k);
                    const auto& nu = params.cutpoints[static_cast<std::size_t>(k)];
                    const auto& xk = problem.x(k);
                    for (int j = 1; j <= nu.size(); ++j) {
                        const int row = layout.cut_slot(k, j);
                        const bool below = observed <= j;
                        acc.m[row] += below ? lower_residual(nu[j - 1], s) : upper_residual(nu[j - 1], s);
                        const double dcut = below ? lower_residual_dcut(nu[j - 1], s)
                                                  : upper_residual_dcut(nu[j - 1], s);
                        acc.j(row, row) += dcut;
                        for (int m = 0; m < xk.cols(); ++m)
                            acc.j(row, layout.beta_slot(k, m)) -= dcut * xk(i, m);
                    }
                }
            }
        },
        [&](Acc& into, const Acc& part) {
            if (into.m.size() == 0) {
                into.m.setZero(dim);
                into.j.setZero(dim, dim);
            }
            if (part.m.size() != 0) {
                into.m += part.m;
                into.j += part.j;
            }
        });
    const double n = static_cast<double>(problem.n_obs());
    return {total.m / n, total.j / n};
}

inline bool cutpoints_ascending(const ParamSet& params) {
    for (const auto& nu : params.cutpoints)
        for (int j = 1; j < nu.size(); ++j)
            if (!(nu[j - 1] < nu[j])) return false;
    return true;
}

} // namespace detail

namespace detail {

// Newton core for the coefficient block; weight = between_cov^{-1}.
inline std::vector<Eigen::VectorXd> solve_beta_weighted(
    const Problem& problem, const MomentLayout& layout,
    const std::vector<Eigen::VectorXd>& cutpoints, const Eigen::MatrixXd& weight,
    const std::vector<Eigen::VectorXd>& beta_start, double tolerance, int max_iterations) {
    ParamSet params;
    params.beta = beta_start;
    params.cutpoints = cutpoints;

    detail::BetaSystem sys = detail::assemble_beta_system(problem, params, layout, weight, true);
    double norm = sys.moments.lpNorm<Eigen::Infinity>();
    for (int iter = 0; iter < max_iterations && norm > tolerance; ++iter) {
        const Eigen::VectorXd step = sys.jacobian.partialPivLu().solve(sys.moments);
        if (!step.allFinite()) throw numeric_error("solve_beta: singular Jacobian");
        double scale = 1.0;
        ParamSet trial = params;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving) {
            for (int g = 0; g < layout.n_beta(); ++g)
                for (const auto& [k, m] : layout.group_members(g))
                    trial.beta[static_cast<std::size_t>(k)][m] =
                        params.beta[static_cast<std::size_t>(k)][m] - scale * step[g];
            try {
                detail::BetaSystem trial_sys =
                    detail::assemble_beta_system(problem, trial, layout, weight, true);
                const double trial_norm = trial_sys.moments.lpNorm<Eigen::Infinity>();
                if (trial_norm < norm || trial_norm <= tolerance) {
                    params = trial;
                    sys = std::move(trial_sys);
                    norm = trial_norm;
                    improved = true;
                    break;
                }
            } catch (const degenerate_cell_error&) {
                // step too aggressive; shrink
            }
            scale *= 0.5;
        }
        if (!improved)
            throw numeric_error("solve_beta: Newton failed to improve the moment norm");
    }
    if (norm > tolerance)
        throw numeric_error("solve_beta: no convergence after " + std::to_string(max_iterations) +
                            " iterations (norm " + std::to_string(norm) + ")");
    return params.beta;
}

} // namespace detail

// Root of the weighted coefficient system at fixed cut-points: damped Newton
// with the analytic truncated-mean Jacobian, step-halving on the moment norm.
inline std::vector<Eigen::VectorXd> solve_beta(const Problem& problem, const MomentLayout& layout,
                                               const std::vector<Eigen::VectorXd>& cutpoints,
                                               const Eigen::MatrixXd& between_cov,
                                               const std::vector<Eigen::VectorXd>& beta_start,
                                               double tolerance = 1e-12, int max_iterations = 60) {
    const Eigen::MatrixXd weight = detail::spd_inverse(between_cov, "solve_beta");
    return detail::solve_beta_weighted(problem, layout, cutpoints, weight, beta_start, tolerance,
                                       max_iterations);
}

// Exactly identified GMM covariance: (1/N) G^{-1} S G^{-T}, with G the
// central-finite-difference Jacobian of the averaged moment vector and
// S the average outer product of per-observation moments.
inline Eigen::MatrixXd sandwich_cov(const Problem& problem, const ParamSet& params,
                                    const MomentLayout& layout, const Eigen::MatrixXd& between_cov,
                                    double jacobian_step = 1e-6) {
    const Eigen::MatrixXd weight = detail::spd_inverse(between_cov, "sandwich_cov");
    const int dim = layout.total();
    const Eigen::VectorXd theta = layout.pack(params);

    Eigen::MatrixXd g_hat(dim, dim);
    ParamSet work = params;
    for (int r = 0; r < dim; ++r) {
        const double h = jacobian_step * std::max(1.0, std::fabs(theta[r]));
        Eigen::VectorXd tp = theta, tm = theta;
        tp[r] += h;
        tm[r] -= h;
        layout.unpack(tp, work);
        const Eigen::VectorXd mp = averaged_moments(problem, work, layout, weight);
        layout.unpack(tm, work);
        const Eigen::VectorXd mm = averaged_moments(problem, work, layout, weight);
        g_hat.col(r) = (mp - mm) / (2.0 * h);
    }

    struct Acc {
        Eigen::MatrixXd sum;
    };
    Acc s_total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            acc.sum.setZero(dim, dim);
            Eigen::VectorXd g(dim);
            for (long i = begin; i < end; ++i) {
                moment_vector(problem, params, layout, weight, i, g);
                acc.sum.selfadjointView<Eigen::Lower>().rankUpdate(g);
            }
        },
        [&](Acc& into, const Acc& part) {
            if (into.sum.size() == 0) into.sum.setZero(dim, dim);
            if (part.sum.size() != 0) into.sum += part.sum;
        });
    Eigen::MatrixXd s_hat = s_total.sum.selfadjointView<Eigen::Lower>();
    s_hat /= static_cast<double>(problem.n_obs());

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(g_hat);
    const Eigen::MatrixXd ginv_s = lu.solve(s_hat);
    if (!ginv_s.allFinite()) throw numeric_error("sandwich_cov: singular moment Jacobian");
    Eigen::MatrixXd cov = lu.solve(ginv_s.transpose()).transpose();
    cov = ((cov + cov.transpose()) / 2.0).eval();
    return cov / static_cast<double>(problem.n_obs());
}

namespace detail {

struct InnerSolveStats {
    int alternations = 0;
    int newton_steps = 0;
    double moment_norm = 0.0;
};

// Drives the joint (beta, nu) system to stationarity at a fixed weight:
// cut-point/coefficient alternation, then a damped joint Newton polish if
// the alternation's cross-coupling leaves the norm above target.
inline InnerSolveStats inner_solve(const Problem& problem, const MomentLayout& layout,
                                   ParamSet& params, const Eigen::MatrixXd& weight,
                                   const FitOptions& options) {
    InnerSolveStats stats;
    const double target = std::min(1e-11, options.moment_tolerance / 2.0);

    double norm = kInf;
    double previous_norm = kInf;
    for (int round = 0; round < options.max_inner_alternations; ++round) {
        params.cutpoints = solve_cutpoints(problem, params.beta);
        params.beta = solve_beta_weighted(problem, layout, params.cutpoints, weight, params.beta,
                                          std::min(target, 1e-12), options.max_newton_iterations);
        ++stats.alternations;
        norm = averaged_moments(problem, params, layout, weight).lpNorm<Eigen::Infinity>();
        if (norm <= target) break;
        // stalled alternation: hand over to the joint Newton
        if (round >= 2 && norm > 0.7 * previous_norm) break;
        previous_norm = norm;
    }

    for (int iter = 0; norm > target && iter < options.max_newton_iterations; ++iter) {
        FullSystem sys = assemble_full_system(problem, params, layout, weight);
        const Eigen::VectorXd step = sys.jacobian.partialPivLu().solve(sys.moments);
        if (!step.allFinite()) throw numeric_error("inner_solve: singular joint Jacobian");
        const Eigen::VectorXd theta = layout.pack(params);
        double scale = 1.0;
        bool improved = false;
        ParamSet trial = params;
        for (int halving = 0; halving < 40; ++halving) {
            layout.unpack(theta - scale * step, trial);
            if (cutpoints_ascending(trial)) {
                try {
                    const double trial_norm =
                        averaged_moments(problem, trial, layout, weight).lpNorm<Eigen::Infinity>();
                    if (trial_norm < norm) {
                        params = trial;
                        norm = trial_norm;
                        improved = true;
                        break;
                    }
                } catch (const degenerate_cell_error&) {
                }
            }
            scale *= 0.5;
        }
        ++stats.newton_steps;
        if (!improved) break;
    }

    stats.moment_norm = norm;
    return stats;
}

} // namespace detail

// Full estimation pipeline. Expects a validated dataset whose regressors are
// (at least approximately) centered; the CLI demeans before calling this.
inline FitResult fit(const ModelSpec& spec, const Dataset& data, const FitOptions& options = {}) {
    const ValidationReport report = validate(spec, data);
    if (!report.ok())
        throw std::invalid_argument("fit: invalid model/data:\n" + report.summary());

    const Problem problem(spec, data);
    const MomentLayout layout(spec);
    const int k_count = problem.n_equations();

    FitResult result;
    result.labels.resize(static_cast<std::size_t>(layout.total()));
    for (int s = 0; s < layout.total(); ++s)
        result.labels[static_cast<std::size_t>(s)] = layout.label(s);

    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();

    ParamSet params = ParamSet::zeros(spec);
    params.cutpoints = start_cutpoints(problem);

    // First stage: identity weight; equals equation-by-equation ordered probit.
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(k_count, k_count);
    detail::inner_solve(problem, layout, params, identity, options);
    result.first_stage = params;
    const auto t_first = clock::now();
    result.seconds_first_stage = std::chrono::duration<double>(t_first - t_start).count();

    // Second stage: re-estimate the in-between covariance, re-solve the
    // weighted system, and iterate the pair to a joint fixed point. The
    // convergence test is run against the freshly re-estimated weight, so a
    // converged fit has both a stationary parameter vector and zero moments
    // under the covariance it reports.
    Eigen::VectorXd previous_theta = layout.pack(params);
    double norm = kInf;
    bool outer_converged = false;
    int outer = 0;
    for (outer = 1; outer <= options.max_outer_iterations; ++outer) {
        params.between_cov = estimate_between_cov(problem, params);
        const Eigen::MatrixXd weight = detail::spd_inverse(params.between_cov, "fit");

        norm = averaged_moments(problem, params, layout, weight).lpNorm<Eigen::Infinity>();
        const Eigen::VectorXd theta = layout.pack(params);
        const double change = (theta - previous_theta).lpNorm<Eigen::Infinity>();
        if (outer >= 2 && norm <= options.moment_tolerance && change <= options.param_tolerance) {
            outer_converged = true;
            break;
        }
        previous_theta = theta;

        detail::inner_solve(problem, layout, params, weight, options);
    }
    if (!outer_converged) {
        params.between_cov = estimate_between_cov(problem, params);
        const Eigen::MatrixXd weight = detail::spd_inverse(params.between_cov, "fit");
        norm = averaged_moments(problem, params, layout, weight).lpNorm<Eigen::Infinity>();
    }
    result.n_iterations = std::min(outer, options.max_outer_iterations);
    result.converged = outer_converged;
    result.params = params;
    result.between_cov = params.between_cov;
    result.moment_norm_final = norm;
    result.estimates = layout.pack(params);
    const auto t_second = clock::now();
    result.seconds_second_stage = std::chrono::duration<double>(t_second - t_first).count();

    if (options.compute_sandwich) {
        result.sandwich_cov =
            sandwich_cov(problem, params, layout, params.between_cov, options.jacobian_step);
        result.se = result.sandwich_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
        result.z.resize(result.se.size());
        for (int r = 0; r < result.se.size(); ++r)
            result.z[r] = result.se[r] > 0.0 ? result.estimates[r] / result.se[r] : 0.0;
    }
    result.seconds_sandwich = std::chrono::duration<double>(clock::now() - t_second).count();
    return result;
}

} // namespace coarsemom
