#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlv/data.hpp"

namespace nlv::cfa {

/// Single-factor model, factor variance fixed to 1.
struct CfaSpec {
    std::vector<std::string> indicator_names;  ///< empty: every panel column
    bool standardize = true;                   ///< z-score indicators before fitting
    std::size_t max_iterations = 2000;
    double gradient_tolerance = 1e-11;
    double stall_tolerance = 1e-6;  ///< accepted when the line search can no longer make progress
    double heywood_floor = 1e-6;  ///< lower bound on error variances (standardized metric)
};

struct FitIndices {
    double chi_square = 0.0;
    int degrees_of_freedom = 0;
    double p_value = 0.0;
    double gfi = 0.0;
    double agfi = 0.0;
    double srmr = 0.0;
    double rmsea = 0.0;
};

struct FitThresholds {
    double gfi_min = 0.9;
    double agfi_min = 0.9;
    double srmr_max = 0.05;
    double rmsea_max = 0.05;
};

struct FitAssessment {
    bool gfi = false;
    bool agfi = false;
    bool srmr = false;
    bool rmsea = false;
    bool all() const { return gfi && agfi && srmr && rmsea; }
};

FitAssessment assess_fit(const FitIndices& fit, const FitThresholds& thresholds = {});

struct CfaResult {
    std::vector<std::string> indicator_names;
    std::size_t sample_size = 0;
    bool standardized = true;

    std::vector<double> loadings;           ///< standardized, in [-1, 1]
    std::vector<double> loading_std_errors;  ///< delta method, inverse observed information
    std::vector<double> loading_t_stats;
    std::vector<double> error_variances;     ///< standardized metric, > 0

    /// Raw-metric solution the scores are computed from.
    std::vector<double> raw_loadings;
    std::vector<double> raw_error_variances;
    std::vector<double> means;
    std::vector<double> scales;        ///< 1 when not standardized
    std::vector<double> score_weights;  ///< Sigma_hat^{-1} lambda

    Eigen::MatrixXd sample_covariance;
    Eigen::MatrixXd implied_covariance;

    int degrees_of_freedom = 0;
    double chi_square = 0.0;  ///< NaN when the sample covariance is singular
    double srmr = 0.0;
    std::optional<FitIndices> fit;  ///< absent for saturated (df <= 0) or singular cases

    std::vector<std::string> respondents;
    std::vector<double> scores;  ///< regression-method factor scores, panel row order

    std::size_t iterations = 0;
    std::vector<std::string> warnings;
};

/// Maximum-likelihood fit of S against Sigma = lambda lambda^T + diag(psi).
/// Sign convention: the loading with largest magnitude is positive.
CfaResult fit_cfa(const IndicatorPanel& panel, const CfaSpec& spec = {});

/// GFI, AGFI, SRMR, RMSEA and chi-square for an implied covariance.
/// Throws NumericalError for singular matrices, SaturatedModelError for df <= 0.
FitIndices fit_indices(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& implied, std::size_t n, int df);

/// Root mean square of residual correlations over the lower triangle including the diagonal.
double srmr(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& implied);

/// F_ML = ln|Sigma| - ln|S| + tr(S Sigma^{-1}) - G.
double ml_discrepancy(const Eigen::MatrixXd& sample, const Eigen::MatrixXd& implied);

/// The fitting objective over params = (lambda_1..G, psi_1..G), with analytic
/// gradient. Equals F_ML up to the constant ln|S| (dropped when S is singular).
class MlObjective {
public:
    explicit MlObjective(Eigen::MatrixXd sample);
    double operator()(std::span<const double> params, std::span<double> grad) const;
    std::size_t indicators() const { return static_cast<std::size_t>(sample_.rows()); }
    bool sample_is_singular() const { return singular_; }

private:
    Eigen::MatrixXd sample_;
    double offset_ = 0.0;
    bool singular_ = false;
};

Eigen::MatrixXd implied_covariance(std::span<const double> loadings, std::span<const double> error_variances);

/// x_hat = lambda^T Sigma_hat^{-1} z per respondent, with z standardized by the fitted means/scales.
/// Throws ValidationError when the panel lacks an indicator or holds a non-finite value.
std::vector<double> score_respondents(const CfaResult& result, const IndicatorPanel& panel);

/// Score for a single already-standardized indicator vector.
double score_standardized(const CfaResult& result, std::span<const double> z);

/// Fills means/scales/raw solution/score_weights for a hand-built result
/// (loadings and error variances given in the standardized metric).
CfaResult make_result(std::vector<std::string> names, std::vector<double> loadings,
                      std::vector<double> error_variances);

}  // namespace nlv::cfa
