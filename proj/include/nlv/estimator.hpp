#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlv/data.hpp"
#include "nlv/model_spec.hpp"
#include "nlv/nl_engine.hpp"
#include "nlv/optimizer.hpp"

namespace nlv {

struct EstimationOptions {
    std::size_t max_iterations = 500;
    /// Applied to the projected gradient of the mean log-likelihood.
    double gradient_tolerance = 1e-6;
    std::size_t starts = 5;
    double jitter = 0.1;  ///< sd of the normal perturbation for starts 2..n
    std::uint64_t seed = 20190101;
    double iv_start = 0.8;
    double iv_lower = 0.01;
    double iv_upper = 1.5;
    bool benchmarks = true;  ///< compute LL(0) and LL(c)
    unsigned threads = 1;
};

struct FitStatistics {
    double ll_beta = 0.0;
    double ll_zero = 0.0;
    double ll_const = 0.0;
    double rho2 = 0.0;         ///< 1 - LL(beta)/LL(0)
    double pseudo_rho2 = 0.0;  ///< 1 - LL(beta)/LL(c)
};

FitStatistics fit_statistics(double ll_beta, double ll_zero, double ll_const);

struct BenchmarkLikelihoods {
    double ll_zero = 0.0;
    double ll_const = 0.0;
    ParameterVector constants;  ///< fitted constants-only MNL
};

/// LL(0) = sum_q ln(1/|available_q|); LL(c) from the constants-only MNL with
/// the base constant fixed at 0. Throws EstimationError if that fit fails.
BenchmarkLikelihoods benchmark_lls(const ChoiceDataset& data, const std::string& base_alternative,
                                   const Execution& exec = {});
BenchmarkLikelihoods benchmark_lls(const ChoiceDataset& data, const ModelSpec& spec, const Execution& exec = {});

enum class StdErrorMethod { inverse_hessian, ridge, unavailable };
std::string to_string(StdErrorMethod m);

struct StandardErrors {
    std::vector<double> values;  ///< per free parameter; NaN when unavailable
    Eigen::MatrixXd covariance;  ///< free x free
    StdErrorMethod method = StdErrorMethod::unavailable;
};

/// Central-difference Hessian of LL (from the analytic gradient), then
/// sqrt(diag((-H)^{-1})). One ridge retry (+1e-6 on the diagonal) when -H is
/// not positive definite; NaN after that.
StandardErrors standard_errors(const ParameterVector& theta_hat, const ChoiceDataset& data,
                               std::span<const double> scores, const Model& model, const Execution& exec = {});

/// Post-hoc check of a free inclusive-value parameter.
struct IvCheck {
    std::string parameter;
    double estimate = 0.0;
    double std_error = 0.0;
    double z_zero = 0.0;  ///< (gamma - 0)/se
    double z_one = 0.0;   ///< (gamma - 1)/se
    bool in_unit_interval = false;  ///< 0 < gamma <= 1
    /// gamma significantly above 0 and not significantly above 1 (two-sided 5%).
    bool consistent = false;
};

struct StartSummary {
    std::vector<double> start;  ///< free values
    optim::Status status = optim::Status::max_iterations;
    std::size_t iterations = 0;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    std::vector<optim::IterationRecord> trace;  ///< on the mean negative LL scale
};

struct Convergence {
    optim::Status status = optim::Status::max_iterations;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    double gradient_norm = 0.0;
    std::size_t best_start = 0;
};

struct EstimationResult {
    std::string model_name;
    std::size_t observations = 0;
    std::size_t respondents = 0;
    ParameterVector theta_hat;
    std::vector<double> std_errors;  ///< aligned with theta_hat entries; NaN for fixed
    std::vector<double> t_stats;
    Eigen::MatrixXd covariance;      ///< free parameters
    StdErrorMethod se_method = StdErrorMethod::unavailable;
    FitStatistics fit;
    bool has_benchmarks = false;
    Convergence convergence;
    std::vector<StartSummary> starts;
    std::vector<IvCheck> iv_checks;
    std::vector<std::string> warnings;
};

/// Maximizes the log-likelihood over the free parameters with projected BFGS
/// on the mean negative log-likelihood; free IVs are boxed to
/// [iv_lower, iv_upper]. The best converged start wins. Throws
/// EstimationError (with per-start traces) when no start converges.
EstimationResult estimate(const ChoiceDataset& data, std::span<const double> scores, const ModelSpec& spec,
                          const EstimationOptions& options = {});

std::string format_start_traces(const std::vector<StartSummary>& starts);

}  // namespace nlv
