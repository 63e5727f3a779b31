#pragma once

// Downstream statistics computed from a converged fit: the model-implied
// latent covariance of the responses (structural part plus recovered error
// correlations), the latent correlation matrix it induces, the
// structural-share coefficient of determination, naive Pearson correlations
// of coded responses for comparison, and the hypothetical exact-observation
// GLS standard errors.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coarsemom/latent.hpp"

namespace coarsemom {

struct PolychoricReport {
    Eigen::MatrixXd sigma_yy;    // latent response covariance
    Eigen::MatrixXd corr_yy;     // latent response correlation
    Eigen::MatrixXd structural;  // B' Sxx B part
    Eigen::MatrixXd error;       // latent error correlation part
};

// Sigma_YY = B' Sxx B + Sigma_eps, assembled from per-equation structural
// indices so that equations may carry different regressor subsets; the
// (k,k') structural entry is the sample cross-moment of the two equations'
// fitted indices.
inline PolychoricReport polychoric_matrix(const Problem& problem, const ParamSet& params,
                                          const Eigen::MatrixXd& latent_corr) {
    const int k_count = problem.n_equations();
    const long n = problem.n_obs();
    Eigen::MatrixXd indices(n, k_count);
    for (int k = 0; k < k_count; ++k)
        indices.col(k) = problem.x(k) * params.beta[static_cast<std::size_t>(k)];

    PolychoricReport report;
    report.structural = indices.transpose() * indices / static_cast<double>(n);
    report.error = latent_corr;
    report.sigma_yy = report.structural + report.error;
    const Eigen::VectorXd sd = report.sigma_yy.diagonal().cwiseSqrt();
    report.corr_yy = report.sigma_yy.array() / (sd * sd.transpose()).array();
    return report;
}

// Structural variance share s/(s+1), s = (1/N) sum (x'beta)^2; the error
// variance is fixed at one by identification.
inline double mckelvey_zavoina_r2(const Problem& problem, const ParamSet& params, int k) {
    const Eigen::VectorXd index = problem.x(k) * params.beta[static_cast<std::size_t>(k)];
    const double s = index.squaredNorm() / static_cast<double>(problem.n_obs());
    return s / (s + 1.0);
}

// Ordinary Pearson correlations of numerically coded responses. The coding
// is arbitrary, which is exactly the point of reporting it next to the
// latent correlations.
inline Eigen::MatrixXd pearson_coded(const Dataset& data,
                                     const std::vector<std::vector<double>>& codes) {
    const int k_count = static_cast<int>(data.responses.cols());
    const long n = data.n_obs();
    Eigen::MatrixXd coded(n, k_count);
    for (int k = 0; k < k_count; ++k) {
        const auto& code = codes[static_cast<std::size_t>(k)];
        for (long i = 0; i < n; ++i) {
            const int j = data.responses(i, k);
            if (j < 1 || j > static_cast<int>(code.size()))
                throw std::invalid_argument("pearson_coded: response outside the code list");
            coded(i, k) = code[static_cast<std::size_t>(j - 1)];
        }
    }
    coded.rowwise() -= coded.colwise().mean();
    Eigen::MatrixXd cov = coded.transpose() * coded / static_cast<double>(n);
    for (int k = 0; k < k_count; ++k)
        if (!(cov(k, k) > 0.0))
            throw numeric_error("pearson_coded: coded column " + std::to_string(k + 1) +
                                " has zero variance");
    const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    return cov.array() / (sd * sd.transpose()).array();
}

// Reference standard errors for the hypothetical exact-observation GLS fit:
// sqrt of the diagonal of (1/N) [ (1/N) sum_i A_i' Sigma^{-1} A_i ]^{-1},
// where A_i is the K x P stacked design respecting coefficient ties.
inline Eigen::VectorXd exact_data_se(const Problem& problem, const MomentLayout& layout,
                                     const Eigen::MatrixXd& latent_corr) {
    const int k_count = problem.n_equations();
    const int p = layout.n_beta();
    Eigen::LLT<Eigen::MatrixXd> llt(latent_corr);
    if (llt.info() != Eigen::Success)
        throw numeric_error("exact_data_se: latent covariance is not positive definite");
    const Eigen::MatrixXd weight = llt.solve(Eigen::MatrixXd::Identity(k_count, k_count));

    struct Acc {
        Eigen::MatrixXd sum;
    };
    Acc total = parallel_reduce<Acc>(
        problem.n_obs(),
        [&](long begin, long end, Acc& acc) {
            acc.sum.setZero(p, p);
            Eigen::MatrixXd design(k_count, p);
            for (long i = begin; i < end; ++i) {
                design.setZero();
                for (int k = 0; k < k_count; ++k)
                    for (int m = 0; m < problem.x(k).cols(); ++m)
                        design(k, layout.beta_slot(k, m)) += problem.x(k)(i, m);
                acc.sum += design.transpose() * weight * design;
            }
        },
        [&](Acc& into, const Acc& part) {
            if (into.sum.size() == 0) into.sum.setZero(p, p);
            if (part.sum.size() != 0) into.sum += part.sum;
        });
    const double n = static_cast<double>(problem.n_obs());
    const Eigen::MatrixXd info = total.sum / n;
    const Eigen::MatrixXd cov = info.inverse() / n;
    if (!cov.allFinite()) throw numeric_error("exact_data_se: singular information matrix");
    return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

} // namespace coarsemom
