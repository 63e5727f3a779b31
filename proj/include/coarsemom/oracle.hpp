#pragma once

// Maximum-likelihood reference fits at K = 1 (ordered probit) and K = 2
// (bivariate ordered probit over rectangle probabilities). These exist to
// cross-check the moment estimator, so they deliberately stay simple:
// quasi-Newton with finite-difference gradients, dense finite-difference
// Hessians for the observed-information standard errors, no code shared
// with the estimation path beyond the scalar kernels.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/gmm.hpp"
#include "coarsemom/model.hpp"

namespace coarsemom {

struct OracleFit {
    Eigen::VectorXd estimates;
    Eigen::VectorXd se;
    double loglik = 0.0;
    bool converged = false;
    double gradient_norm = 0.0;  // of the mean log-likelihood at the optimum
    int n_iterations = 0;
    std::vector<std::string> labels;
};

namespace detail {

using Objective = std::function<double(const Eigen::VectorXd&)>;

inline double guarded_eval(const Objective& f, const Eigen::VectorXd& x) {
    try {
        return f(x);
    } catch (const numeric_error&) {
        return kInf;
    }
}

inline Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (int r = 0; r < x.size(); ++r) {
        const double h = 1e-6 * std::max(1.0, std::fabs(x[r]));
        xp[r] = x[r] + h;
        const double fp = guarded_eval(f, xp);
        xp[r] = x[r] - h;
        const double fm = guarded_eval(f, xp);
        xp[r] = x[r];
        g[r] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x,
                                  double rel_step = 1e-4) {
    const int dim = static_cast<int>(x.size());
    Eigen::MatrixXd h_mat(dim, dim);
    Eigen::VectorXd step(dim);
    for (int r = 0; r < dim; ++r) step[r] = rel_step * std::max(1.0, std::fabs(x[r]));
    const double f0 = f(x);
    Eigen::VectorXd xt = x;
    for (int r = 0; r < dim; ++r) {
        xt[r] = x[r] + step[r];
        const double fp = f(xt);
        xt[r] = x[r] - step[r];
        const double fm = f(xt);
        xt[r] = x[r];
        h_mat(r, r) = (fp - 2.0 * f0 + fm) / (step[r] * step[r]);
        for (int c = r + 1; c < dim; ++c) {
            xt[r] = x[r] + step[r];
            xt[c] = x[c] + step[c];
            const double fpp = f(xt);
            xt[c] = x[c] - step[c];
            const double fpm = f(xt);
            xt[r] = x[r] - step[r];
            const double fmm = f(xt);
            xt[c] = x[c] + step[c];
            const double fmp = f(xt);
            xt[r] = x[r];
            xt[c] = x[c];
            h_mat(r, c) = h_mat(c, r) = (fpp - fpm - fmp + fmm) / (4.0 * step[r] * step[c]);
        }
    }
    return h_mat;
}

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// BFGS (inverse-Hessian form) with Armijo backtracking.
inline MinimizeResult minimize(const Objective& f, Eigen::VectorXd x, int max_iterations = 600,
                               double gradient_tolerance = 1e-8) {
    MinimizeResult result;
    const int dim = static_cast<int>(x.size());
    double value = guarded_eval(f, x);
    Eigen::VectorXd grad = fd_gradient(f, x);
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);

    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() <= gradient_tolerance) {
            result.converged = true;
            break;
        }
        Eigen::VectorXd direction = -(hinv * grad);
        if (direction.dot(grad) >= 0.0) {
            hinv.setIdentity();
            direction = -grad;
        }
        double t = 1.0;
        double trial_value = kInf;
        Eigen::VectorXd trial;
        const double slope = direction.dot(grad);
        bool stepped = false;
        for (int halving = 0; halving < 50; ++halving) {
            trial = x + t * direction;
            trial_value = guarded_eval(f, trial);
            if (trial_value <= value + 1e-4 * t * slope) {
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if (!stepped) break;
        const Eigen::VectorXd s = trial - x;
        const Eigen::VectorXd grad_new = fd_gradient(f, trial);
        const Eigen::VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const Eigen::VectorXd hy = hinv * y;
            const double yhy = y.dot(hy);
            hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                    (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        x = trial;
        value = trial_value;
        grad = grad_new;
    }
    result.x = x;
    result.value = value;
    result.iterations = iter;
    if (!result.converged)
        result.converged = grad.lpNorm<Eigen::Infinity>() <= 10.0 * gradient_tolerance;
    return result;
}

// Newton refinement on the raw parameterization; validity(x) gates steps.
inline void newton_polish(const Objective& f, Eigen::VectorXd& x,
                          const std::function<bool(const Eigen::VectorXd&)>& validity,
                          int rounds = 4) {
    for (int round = 0; round < rounds; ++round) {
        const Eigen::VectorXd grad = fd_gradient(f, x);
        const Eigen::MatrixXd hess = fd_hessian(f, x, 1e-5);
        Eigen::VectorXd step = hess.ldlt().solve(grad);
        if (!step.allFinite()) return;
        double t = 1.0;
        const double value = guarded_eval(f, x);
        for (int halving = 0; halving < 20; ++halving) {
            const Eigen::VectorXd trial = x - t * step;
            if (validity(trial) && guarded_eval(f, trial) <= value) {
                x = trial;
                break;
            }
            t *= 0.5;
        }
    }
}

inline bool ascending(const Eigen::VectorXd& nu) {
    for (int j = 1; j < nu.size(); ++j)
        if (!(nu[j - 1] < nu[j])) return false;
    return true;
}

// (nu_1, log successive gaps) <-> nu
inline Eigen::VectorXd nu_to_free(const Eigen::VectorXd& nu) {
    Eigen::VectorXd t(nu.size());
    if (nu.size() == 0) return t;
    t[0] = nu[0];
    for (int j = 1; j < nu.size(); ++j) t[j] = std::log(nu[j] - nu[j - 1]);
    return t;
}

inline Eigen::VectorXd free_to_nu(const Eigen::VectorXd& t) {
    Eigen::VectorXd nu(t.size());
    if (t.size() == 0) return nu;
    nu[0] = t[0];
    for (int j = 1; j < t.size(); ++j) nu[j] = nu[j - 1] + std::exp(t[j]);
    return nu;
}

} // namespace detail

// Ordered-probit log-likelihood for one equation.
inline double op_loglik(const Problem& problem, int k, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& cutpoints) {
    if (!detail::ascending(cutpoints)) throw numeric_error("op_loglik: cut-points not ascending");
    struct Acc {
        double sum = 0.0;
    };
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            for (long i = begin; i < end; ++i) {
                const double s = problem.x(k).row(i).dot(beta);
                const Interval iv = category_interval(cutpoints, problem.response(i, k));
                const double mass = interval_mass(iv.lower == -kInf ? -kInf : iv.lower - s,
                                                  iv.upper == kInf ? kInf : iv.upper - s);
                if (!(mass >= kDegenerateMass))
                    throw degenerate_cell_error("op_loglik: zero-probability cell", i, k,
                                                problem.response(i, k));
                acc.sum += std::log(mass);
            }
        },
        [](Acc& into, const Acc& part) { into.sum += part.sum; });
    return total.sum;
}

// ML fit of one ordered-probit equation; standard errors from the inverted
// finite-difference observed information.
inline OracleFit op_ml_fit(const Problem& problem, int k, bool fix_beta_zero = false) {
    const int m_count = static_cast<int>(problem.x(k).cols());
    const int j_free = problem.spec().equations[static_cast<std::size_t>(k)].n_categories - 1;
    const double n = static_cast<double>(problem.n_obs());

    // starts: beta = 0, quantile cut-points
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(j_free + 1);
    for (long i = 0; i < problem.n_obs(); ++i) counts[problem.response(i, k) - 1] += 1.0;
    Eigen::VectorXd nu0(j_free);
    double cum = 0.0;
    for (int j = 0; j < j_free; ++j) {
        cum += counts[j];
        nu0[j] = std_quantile(cum / n);
    }

    const int beta_dim = fix_beta_zero ? 0 : m_count;
    auto mean_negloglik_free = [&](const Eigen::VectorXd& t) {
        const Eigen::VectorXd beta =
            fix_beta_zero ? Eigen::VectorXd::Zero(m_count) : t.head(m_count).eval();
        const Eigen::VectorXd nu = detail::free_to_nu(t.tail(j_free));
        return -op_loglik(problem, k, beta, nu) / n;
    };

    Eigen::VectorXd t0(beta_dim + j_free);
    t0.setZero();
    t0.tail(j_free) = detail::nu_to_free(nu0);
    detail::MinimizeResult opt = detail::minimize(mean_negloglik_free, t0);

    // refine on the natural parameterization
    Eigen::VectorXd theta(beta_dim + j_free);
    theta.head(beta_dim) = opt.x.head(beta_dim);
    theta.tail(j_free) = detail::free_to_nu(opt.x.tail(j_free));
    auto mean_negloglik = [&](const Eigen::VectorXd& th) {
        const Eigen::VectorXd beta =
            fix_beta_zero ? Eigen::VectorXd::Zero(m_count) : th.head(m_count).eval();
        const Eigen::VectorXd nu = th.tail(j_free);
        if (!detail::ascending(nu)) throw numeric_error("cutpoints not ascending");
        return -op_loglik(problem, k, beta, nu) / n;
    };
    detail::newton_polish(mean_negloglik, theta,
                          [&](const Eigen::VectorXd& th) { return detail::ascending(th.tail(j_free)); });

    OracleFit fit;
    fit.estimates = theta;
    fit.loglik = -mean_negloglik(theta) * n;
    fit.gradient_norm = detail::fd_gradient(mean_negloglik, theta).lpNorm<Eigen::Infinity>();
    fit.n_iterations = opt.iterations;
    fit.converged = fit.gradient_norm <= 1e-6;
    const Eigen::MatrixXd info = detail::fd_hessian(mean_negloglik, theta);
    const Eigen::MatrixXd cov = info.inverse() / n;
    fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    const auto& eq = problem.spec().equations[static_cast<std::size_t>(k)];
    for (int m = 0; m < beta_dim; ++m) fit.labels.push_back("Eq." + eq.response_name + ": " + eq.regressor_names[static_cast<std::size_t>(m)]);
    for (int j = 1; j <= j_free; ++j)
        fit.labels.push_back("Eq." + eq.response_name + ": cutp. " + std::to_string(j));
    return fit;
}

// Bivariate ordered-probit log-likelihood over rectangle probabilities.
inline double biprobit_loglik(const Problem& problem, int k1, int k2, const Eigen::VectorXd& beta1,
                              const Eigen::VectorXd& beta2, const Eigen::VectorXd& nu1,
                              const Eigen::VectorXd& nu2, double rho) {
    if (!(std::fabs(rho) < 1.0)) throw numeric_error("biprobit_loglik: |rho| must be < 1");
    if (!detail::ascending(nu1) || !detail::ascending(nu2))
        throw numeric_error("biprobit_loglik: cut-points not ascending");
    struct Acc {
        double sum = 0.0;
    };
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            for (long i = begin; i < end; ++i) {
                const double s1 = problem.x(k1).row(i).dot(beta1);
                const double s2 = problem.x(k2).row(i).dot(beta2);
                Interval a = category_interval(nu1, problem.response(i, k1));
                Interval b = category_interval(nu2, problem.response(i, k2));
                if (a.lower != -kInf) a.lower -= s1;
                if (a.upper != kInf) a.upper -= s1;
                if (b.lower != -kInf) b.lower -= s2;
                if (b.upper != kInf) b.upper -= s2;
                const double p = bvn_rect_prob(a, b, rho);
                if (!(p >= kDegenerateMass))
                    throw degenerate_cell_error("biprobit_loglik: zero-probability cell", i, k1,
                                                problem.response(i, k1));
                acc.sum += std::log(p);
            }
        },
        [](Acc& into, const Acc& part) { into.sum += part.sum; });
    return total.sum;
}

struct BiprobitFit {
    OracleFit fit;  // estimates laid out as (beta1, nu1, beta2, nu2, rho)
    Eigen::VectorXd beta1, beta2, nu1, nu2;
    double rho = 0.0;
    double rho_se = 0.0;
};

inline BiprobitFit biprobit_ml_fit(const Problem& problem, int k1, int k2) {
    const int m1 = static_cast<int>(problem.x(k1).cols());
    const int m2 = static_cast<int>(problem.x(k2).cols());
    const int j1 = problem.spec().equations[static_cast<std::size_t>(k1)].n_categories - 1;
    const int j2 = problem.spec().equations[static_cast<std::size_t>(k2)].n_categories - 1;
    const double n = static_cast<double>(problem.n_obs());
    const int dim = m1 + j1 + m2 + j2 + 1;

    // start from the univariate ML fits and rho = 0
    const OracleFit f1 = op_ml_fit(problem, k1);
    const OracleFit f2 = op_ml_fit(problem, k2);

    auto split = [&](const Eigen::VectorXd& th, bool transformed) {
        struct Parts {
            Eigen::VectorXd beta1, nu1, beta2, nu2;
            double rho;
        } p;
        p.beta1 = th.segment(0, m1);
        p.nu1 = transformed ? detail::free_to_nu(th.segment(m1, j1)) : th.segment(m1, j1).eval();
        p.beta2 = th.segment(m1 + j1, m2);
        p.nu2 = transformed ? detail::free_to_nu(th.segment(m1 + j1 + m2, j2))
                            : th.segment(m1 + j1 + m2, j2).eval();
        p.rho = transformed ? std::tanh(th[dim - 1]) : th[dim - 1];
        return p;
    };

    auto mean_negloglik_free = [&](const Eigen::VectorXd& t) {
        const auto p = split(t, true);
        return -biprobit_loglik(problem, k1, k2, p.beta1, p.beta2, p.nu1, p.nu2, p.rho) / n;
    };

    Eigen::VectorXd t0(dim);
    t0.segment(0, m1) = f1.estimates.head(m1);
    t0.segment(m1, j1) = detail::nu_to_free(f1.estimates.tail(j1));
    t0.segment(m1 + j1, m2) = f2.estimates.head(m2);
    t0.segment(m1 + j1 + m2, j2) = detail::nu_to_free(f2.estimates.tail(j2));
    t0[dim - 1] = 0.0;
    detail::MinimizeResult opt = detail::minimize(mean_negloglik_free, t0);

    Eigen::VectorXd theta(dim);
    {
        const auto p = split(opt.x, true);
        theta.segment(0, m1) = p.beta1;
        theta.segment(m1, j1) = p.nu1;
        theta.segment(m1 + j1, m2) = p.beta2;
        theta.segment(m1 + j1 + m2, j2) = p.nu2;
        theta[dim - 1] = p.rho;
    }
    auto mean_negloglik = [&](const Eigen::VectorXd& th) {
        const auto p = split(th, false);
        return -biprobit_loglik(problem, k1, k2, p.beta1, p.beta2, p.nu1, p.nu2, p.rho) / n;
    };
    auto valid = [&](const Eigen::VectorXd& th) {
        const auto p = split(th, false);
        return detail::ascending(p.nu1) && detail::ascending(p.nu2) && std::fabs(p.rho) < 0.999;
    };
    detail::newton_polish(mean_negloglik, theta, valid);

    BiprobitFit out;
    out.fit.estimates = theta;
    out.fit.loglik = -mean_negloglik(theta) * n;
    out.fit.gradient_norm = detail::fd_gradient(mean_negloglik, theta).lpNorm<Eigen::Infinity>();
    out.fit.converged = out.fit.gradient_norm <= 1e-6;
    out.fit.n_iterations = opt.iterations;
    const Eigen::MatrixXd info = detail::fd_hessian(mean_negloglik, theta);
    const Eigen::MatrixXd cov = info.inverse() / n;
    out.fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();

    const auto p = split(theta, false);
    out.beta1 = p.beta1;
    out.nu1 = p.nu1;
    out.beta2 = p.beta2;
    out.nu2 = p.nu2;
    out.rho = p.rho;
    out.rho_se = out.fit.se[dim - 1];
    return out;
}

} // namespace coarsemom
