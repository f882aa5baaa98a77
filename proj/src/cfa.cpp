#include "nlv/cfa.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <fmt/format.h>
#include <Eigen/LU>
#include <boost/math/distributions/chi_squared.hpp>

#include "nlv/error.hpp"
#include "nlv/optimizer.hpp"

namespace nlv::cfa {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double log_det_spd(const MatrixXd& m, const char* what) {
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + " is not positive definite");
    const VectorXd d = MatrixXd(llt.matrixL()).diagonal();
    return 2.0 * d.array().log().sum();
}

}  // namespace

MatrixXd implied_covariance(std::span<const double> loadings, std::span<const double> error_variances) {
    const auto g = static_cast<Eigen::Index>(loadings.size());
    const Eigen::Map<const VectorXd> lambda(loadings.data(), g);
    MatrixXd sigma = lambda * lambda.transpose();
    for (Eigen::Index i = 0; i < g; ++i) sigma(i, i) += error_variances[static_cast<std::size_t>(i)];
    return sigma;
}

double srmr(const MatrixXd& sample, const MatrixXd& implied) {
    const Eigen::Index g = sample.rows();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < g; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double rs = sample(i, j) / std::sqrt(sample(i, i) * sample(j, j));
            const double ri = implied(i, j) / std::sqrt(implied(i, i) * implied(j, j));
            sum += (rs - ri) * (rs - ri);
        }
    }
    return std::sqrt(sum / static_cast<double>(g * (g + 1) / 2));
}

double ml_discrepancy(const MatrixXd& sample, const MatrixXd& implied) {
    const double ld_sigma = log_det_spd(implied, "implied covariance");
    const double ld_s = log_det_spd(sample, "sample covariance");
    const MatrixXd inv = implied.llt().solve(MatrixXd::Identity(implied.rows(), implied.cols()));
    return ld_sigma - ld_s + (sample * inv).trace() - static_cast<double>(sample.rows());
}

FitIndices fit_indices(const MatrixXd& sample, const MatrixXd& implied, std::size_t n, int df) {
    if (sample.rows() != implied.rows() || sample.cols() != implied.cols() || sample.rows() != sample.cols()) {
        throw NumericalError("fit_indices: matrices must be square and of the same order");
    }
    if (df <= 0) throw SaturatedModelError("fit indices are undefined for a saturated model (df = " +
                                           std::to_string(df) + ")");
    if (n < 2) throw NumericalError("fit_indices: sample size must be at least 2");
    const auto g = static_cast<double>(sample.rows());
    Eigen::LLT<MatrixXd> llt(implied);
    if (llt.info() != Eigen::Success) throw NumericalError("implied covariance is singular");
    const MatrixXd a = llt.solve(sample);  // Sigma^{-1} S
    const MatrixXd resid = a - MatrixXd::Identity(a.rows(), a.cols());

    FitIndices fit;
    fit.degrees_of_freedom = df;
    fit.gfi = 1.0 - (resid * resid).trace() / (a * a).trace();
    fit.agfi = 1.0 - (g * (g + 1.0) / (2.0 * df)) * (1.0 - fit.gfi);
    fit.srmr = srmr(sample, implied);
    const double f_ml = std::max(0.0, ml_discrepancy(sample, implied));
    const double nm1 = static_cast<double>(n - 1);
    fit.chi_square = nm1 * f_ml;
    fit.rmsea = std::sqrt(std::max(fit.chi_square - df, 0.0) / (df * nm1));
    const boost::math::chi_squared dist(df);
    fit.p_value = boost::math::cdf(boost::math::complement(dist, fit.chi_square));
    return fit;
}

FitAssessment assess_fit(const FitIndices& fit, const FitThresholds& t) {
    return {fit.gfi > t.gfi_min, fit.agfi > t.agfi_min, fit.srmr < t.srmr_max, fit.rmsea < t.rmsea_max};
}

// --- ML objective ----------------------------------------------------------

MlObjective::MlObjective(MatrixXd sample) : sample_(std::move(sample)) {
    Eigen::LLT<MatrixXd> llt(sample_);
    const VectorXd d = MatrixXd(llt.matrixL()).diagonal();
    singular_ = llt.info() != Eigen::Success || (d.array() <= 1e-12).any();
    offset_ = static_cast<double>(sample_.rows()) + (singular_ ? 0.0 : 2.0 * d.array().log().sum());
}

double MlObjective::operator()(std::span<const double> params, std::span<double> grad) const {
    const std::size_t g = indicators();
    const auto lambda = params.first(g);
    const auto psi = params.subspan(g, g);
    const MatrixXd sigma = implied_covariance(lambda, psi);
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        std::fill(grad.begin(), grad.end(), 0.0);
        return std::numeric_limits<double>::infinity();
    }
    const MatrixXd inv = llt.solve(MatrixXd::Identity(sigma.rows(), sigma.cols()));
    const VectorXd d = MatrixXd(llt.matrixL()).diagonal();
    const double value = 2.0 * d.array().log().sum() + (sample_ * inv).trace() - offset_;
    // dF/dSigma = Sigma^{-1} (Sigma - S) Sigma^{-1}; residual first so the
    // gradient stays accurate near the optimum
    const MatrixXd m = inv * (sigma - sample_) * inv;
    const Eigen::Map<const VectorXd> lam(lambda.data(), static_cast<Eigen::Index>(g));
    const VectorXd dl = 2.0 * m * lam;
    for (std::size_t i = 0; i < g; ++i) {
        grad[i] = dl(static_cast<Eigen::Index>(i));
        grad[g + i] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    }
    return value;
}

// --- fitting ---------------------------------------------------------------

namespace {

void finish_scoring_weights(CfaResult& r) {
    const MatrixXd sigma = implied_covariance(r.raw_loadings, r.raw_error_variances);
    const Eigen::Map<const VectorXd> lam(r.raw_loadings.data(), static_cast<Eigen::Index>(r.raw_loadings.size()));
    const VectorXd w = sigma.llt().solve(lam);
    r.score_weights.assign(w.data(), w.data() + w.size());
    r.implied_covariance = sigma;
}

}  // namespace

CfaResult make_result(std::vector<std::string> names, std::vector<double> loadings,
                      std::vector<double> error_variances) {
    if (names.size() != loadings.size() || loadings.size() != error_variances.size()) {
        throw ValidationError("make_result: inconsistent lengths");
    }
    CfaResult r;
    r.indicator_names = std::move(names);
    r.loadings = loadings;
    r.error_variances = error_variances;
    r.raw_loadings = std::move(loadings);
    r.raw_error_variances = std::move(error_variances);
    r.means.assign(r.indicator_names.size(), 0.0);
    r.scales.assign(r.indicator_names.size(), 1.0);
    r.loading_std_errors.assign(r.indicator_names.size(), std::numeric_limits<double>::quiet_NaN());
    r.loading_t_stats = r.loading_std_errors;
    finish_scoring_weights(r);
    return r;
}

CfaResult fit_cfa(const IndicatorPanel& input, const CfaSpec& spec) {
    const IndicatorPanel panel = spec.indicator_names.empty() ? input : input.select(spec.indicator_names);
    const auto g = static_cast<std::size_t>(panel.values.cols());
    const auto n = static_cast<std::size_t>(panel.values.rows());
    if (g < 3) throw ValidationError("a single-factor CFA needs at least 3 indicators (got " + std::to_string(g) + ")");
    if (n < 2) throw ValidationError("CFA needs at least 2 respondents");
    if (!panel.values.allFinite()) throw ValidationError("indicator panel contains non-finite values");

    CfaResult r;
    r.indicator_names = panel.indicator_names;
    r.sample_size = n;
    r.standardized = spec.standardize;
    r.respondents = panel.respondents;
    r.warnings = panel.warnings;

    // Centre (and scale) the indicators; S from the transformed data.
    MatrixXd z = panel.values;
    r.means.resize(g);
    r.scales.assign(g, 1.0);
    for (std::size_t k = 0; k < g; ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        r.means[k] = z.col(col).mean();
        z.col(col).array() -= r.means[k];
        const double var = z.col(col).squaredNorm() / static_cast<double>(n - 1);
        if (!(var > 0.0)) {
            throw ValidationError("indicator '" + panel.indicator_names[k] + "' has zero variance");
        }
        if (spec.standardize) {
            r.scales[k] = std::sqrt(var);
            z.col(col) /= r.scales[k];
        }
    }
    const MatrixXd s = (z.transpose() * z) / static_cast<double>(n - 1);
    r.sample_covariance = s;

    const MlObjective objective(s);
    if (objective.sample_is_singular()) {
        r.warnings.push_back("sample covariance is singular; chi-square based indices are undefined");
    }

    // Start values from squared multiple correlations.
    std::vector<double> x0(2 * g), lower(2 * g, -std::numeric_limits<double>::infinity()),
        upper(2 * g, std::numeric_limits<double>::infinity());
    Eigen::FullPivLU<MatrixXd> lu(s);
    const bool invertible = lu.isInvertible();
    const MatrixXd s_inv = invertible ? MatrixXd(lu.inverse()) : MatrixXd();
    for (std::size_t k = 0; k < g; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double var = s(kk, kk);
        double smc = invertible ? 1.0 - 1.0 / (s_inv(kk, kk) * var) : 0.8;
        smc = std::clamp(smc, 0.1, 0.95);
        x0[k] = std::sqrt(smc * var);
        x0[g + k] = (1.0 - smc) * var;
        lower[g + k] = spec.heywood_floor * var;
    }
    optim::Options opts;
    opts.max_iterations = spec.max_iterations;
    opts.gradient_tolerance = spec.gradient_tolerance;
    opts.stall_tolerance = spec.stall_tolerance;
    const auto fit = optim::minimize_bfgs(objective, x0, lower, upper, opts);
    r.iterations = fit.iterations;
    // With singular S the optimum sits on the variance floor where the
    // objective is too steep for the line search; accept the last iterate.
    const bool stalled_singular =
        fit.status == optim::Status::line_search_failed && objective.sample_is_singular();
    if (stalled_singular) r.warnings.push_back("optimizer stopped on the error-variance floor");
    if (!fit.converged() && !stalled_singular) {
        std::string msg = "CFA did not converge (" + optim::to_string(fit.status) + " after " +
                          std::to_string(fit.iterations) + " iterations); last iterates:";
        const std::size_t first = fit.trace.size() > 5 ? fit.trace.size() - 5 : 0;
        for (std::size_t i = first; i < fit.trace.size(); ++i) {
            msg += fmt::format("\n  iter {}: F = {:.10g}, |grad| = {:.3g}", fit.trace[i].iteration, fit.trace[i].value,
                               fit.trace[i].gradient_norm);
        }
        throw EstimationError(msg);
    }

    std::vector<double> lambda(fit.x.begin(), fit.x.begin() + static_cast<std::ptrdiff_t>(g));
    std::vector<double> psi(fit.x.begin() + static_cast<std::ptrdiff_t>(g), fit.x.end());
    const auto largest = std::max_element(lambda.begin(), lambda.end(),
                                          [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*largest < 0.0) {
        for (auto& l : lambda) l = -l;
    }
    std::vector<bool> at_floor(g, false);
    for (std::size_t k = 0; k < g; ++k) {
        if (psi[k] <= lower[g + k] * (1.0 + 1e-9)) {
            at_floor[k] = true;
            r.warnings.push_back("Heywood case: error variance of '" + r.indicator_names[k] +
                                 "' bounded at floor " + std::to_string(spec.heywood_floor));
        }
    }
    r.raw_loadings = lambda;
    r.raw_error_variances = psi;
    r.loadings.resize(g);
    r.error_variances.resize(g);
    for (std::size_t k = 0; k < g; ++k) {
        const double total = lambda[k] * lambda[k] + psi[k];
        r.loadings[k] = lambda[k] / std::sqrt(total);
        r.error_variances[k] = psi[k] / total;
    }
    finish_scoring_weights(r);

    // Delta-method standard errors of the standardized loadings from the
    // inverse observed information, 2/(n-1) * (d2F)^{-1}.
    r.loading_std_errors.assign(g, std::numeric_limits<double>::quiet_NaN());
    r.loading_t_stats = r.loading_std_errors;
    {
        std::vector<std::size_t> free;
        for (std::size_t k = 0; k < 2 * g; ++k) {
            if (k < g || !at_floor[k - g]) free.push_back(k);
        }
        std::vector<double> x(lambda);
        x.insert(x.end(), psi.begin(), psi.end());
        const auto p = static_cast<Eigen::Index>(free.size());
        MatrixXd hess(p, p);
        std::vector<double> gp(2 * g), gm(2 * g);
        for (Eigen::Index c = 0; c < p; ++c) {
            const std::size_t k = free[static_cast<std::size_t>(c)];
            const double h = 1e-5 * std::max(1.0, std::abs(x[k]));
            auto xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            objective(xp, gp);
            objective(xm, gm);
            for (Eigen::Index rr = 0; rr < p; ++rr) {
                const std::size_t kr = free[static_cast<std::size_t>(rr)];
                hess(rr, c) = (gp[kr] - gm[kr]) / (2.0 * h);
            }
        }
        hess = 0.5 * (hess + hess.transpose());
        Eigen::LLT<MatrixXd> llt(hess);
        if (llt.info() == Eigen::Success) {
            const MatrixXd cov = (2.0 / static_cast<double>(n - 1)) * llt.solve(MatrixXd::Identity(p, p));
            for (std::size_t k = 0; k < g; ++k) {
                const double total = lambda[k] * lambda[k] + psi[k];
                const double denom = std::pow(total, 1.5);
                // Position of lambda_k and psi_k among the free parameters.
                const auto li = static_cast<Eigen::Index>(k);
                const auto psi_it = std::find(free.begin(), free.end(), g + k);
                double var = (psi[k] / denom) * (psi[k] / denom) * cov(li, li);
                if (psi_it != free.end()) {
                    const auto pi = static_cast<Eigen::Index>(psi_it - free.begin());
                    const double dpsi = -lambda[k] / (2.0 * denom);
                    var += 2.0 * (psi[k] / denom) * dpsi * cov(li, pi) + dpsi * dpsi * cov(pi, pi);
                }
                r.loading_std_errors[k] = std::sqrt(std::max(var, 0.0));
                r.loading_t_stats[k] = r.loadings[k] / r.loading_std_errors[k];
            }
        } else {
            r.warnings.push_back("information matrix is not positive definite; loading standard errors unavailable");
        }
    }

    r.degrees_of_freedom = static_cast<int>(g * (g + 1) / 2) - static_cast<int>(2 * g);
    r.srmr = srmr(s, r.implied_covariance);
    r.chi_square = objective.sample_is_singular()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : static_cast<double>(n - 1) * std::max(0.0, ml_discrepancy(s, r.implied_covariance));
    if (r.degrees_of_freedom <= 0) {
        r.warnings.push_back("model is saturated (df = " + std::to_string(r.degrees_of_freedom) +
                             "); fit indices are undefined");
    } else if (!objective.sample_is_singular()) {
        r.fit = fit_indices(s, r.implied_covariance, n, r.degrees_of_freedom);
    }

    r.scores = score_respondents(r, panel);
    return r;
}

double score_standardized(const CfaResult& result, std::span<const double> z) {
    if (z.size() != result.score_weights.size()) throw ValidationError("indicator vector has the wrong length");
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += result.score_weights[k] * z[k];
    return s;
}

std::vector<double> score_respondents(const CfaResult& result, const IndicatorPanel& panel) {
    std::vector<Eigen::Index> cols;
    for (const auto& name : result.indicator_names) {
        const auto it = std::find(panel.indicator_names.begin(), panel.indicator_names.end(), name);
        if (it == panel.indicator_names.end()) {
            throw ValidationError("cannot score: panel is missing indicator '" + name + "'");
        }
        cols.push_back(static_cast<Eigen::Index>(it - panel.indicator_names.begin()));
    }
    std::vector<double> scores(panel.size());
    std::vector<double> z(cols.size());
    for (std::size_t r = 0; r < panel.size(); ++r) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const double x = panel.values(static_cast<Eigen::Index>(r), cols[k]);
            if (!std::isfinite(x)) {
                throw ValidationError("cannot score respondent '" + panel.respondents[r] + "': indicator '" +
                                      result.indicator_names[k] + "' is missing");
            }
            z[k] = (x - result.means[k]) / result.scales[k];
        }
        scores[r] = score_standardized(result, z);
    }
    return scores;
}

}  // namespace nlv::cfa
