#include "nlv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "nlv/error.hpp"

namespace nlv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Problem {
    const ChoiceDataset& data;
    std::span<const double> scores;
    const Model& model;
    Execution exec;
    ParameterVector theta;  // scratch copy; free entries overwritten per call
    double scale;           // 1/Q

    double operator()(std::span<const double> x, std::span<double> grad) {
        theta.set_free_values(x);
        LikelihoodValue lv;
        try {
            lv = log_likelihood_gradient(data, scores, theta, model, exec);
        } catch (const NumericalError&) {
            // Underflowed chosen probability: an infeasible point for the line search.
            std::fill(grad.begin(), grad.end(), 0.0);
            return std::numeric_limits<double>::infinity();
        }
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = -lv.gradient[i] * scale;
        return -lv.log_likelihood * scale;
    }
};

std::pair<std::vector<double>, std::vector<double>> bounds_for(const ParameterVector& theta, double lo, double hi) {
    std::vector<double> lower, upper;
    for (const std::size_t i : theta.free_indices()) {
        const bool iv = theta[i].kind == ParameterKind::inclusive_value;
        lower.push_back(iv ? lo : -std::numeric_limits<double>::infinity());
        upper.push_back(iv ? hi : std::numeric_limits<double>::infinity());
    }
    return {lower, upper};
}

}  // namespace

std::string to_string(StdErrorMethod m) {
    switch (m) {
        case StdErrorMethod::inverse_hessian: return "inverse numerical Hessian";
        case StdErrorMethod::ridge: return "inverse numerical Hessian with ridge 1e-6";
        case StdErrorMethod::unavailable: return "unavailable";
    }
    return "unknown";
}

FitStatistics fit_statistics(double ll_beta, double ll_zero, double ll_const) {
    FitStatistics f;
    f.ll_beta = ll_beta;
    f.ll_zero = ll_zero;
    f.ll_const = ll_const;
    f.rho2 = 1.0 - ll_beta / ll_zero;
    f.pseudo_rho2 = 1.0 - ll_beta / ll_const;
    return f;
}

BenchmarkLikelihoods benchmark_lls(const ChoiceDataset& data, const std::string& base_alternative,
                                   const Execution& exec) {
    if (data.observations.empty()) throw ValidationError("benchmark_lls: dataset has no observations");
    std::vector<double> terms(data.observations.size());
    for (std::size_t q = 0; q < terms.size(); ++q) {
        terms[q] = -std::log(static_cast<double>(data.observations[q].available_count()));
    }
    BenchmarkLikelihoods b;
    b.ll_zero = pairwise_sum(terms);

    const ModelSpec spec = constants_only_spec(data.alternative_labels, base_alternative);
    const Model model = Model::bind(spec, data);
    Problem problem{data, {}, model, exec, model.start_parameters(), 1.0 / static_cast<double>(terms.size())};
    // Constants of never-chosen alternatives run off to -inf; the box keeps them finite.
    const std::vector<double> lower(problem.theta.free_count(), -50.0), upper(problem.theta.free_count(), 50.0);
    optim::Options opts;
    opts.gradient_tolerance = 1e-10;
    opts.stall_tolerance = 1e-7;
    opts.max_iterations = 1000;
    const auto fit = optim::minimize_bfgs(std::ref(problem), problem.theta.free_values(), lower, upper, opts);
    if (!fit.converged()) {
        throw EstimationError("constants-only model did not converge (" + optim::to_string(fit.status) + ")");
    }
    b.constants = model.start_parameters();
    b.constants.set_free_values(fit.x);
    b.ll_const = log_likelihood(data, {}, b.constants, model, exec);
    return b;
}

BenchmarkLikelihoods benchmark_lls(const ChoiceDataset& data, const ModelSpec& spec, const Execution& exec) {
    return benchmark_lls(data, spec.base_alternative, exec);
}

StandardErrors standard_errors(const ParameterVector& theta_hat, const ChoiceDataset& data,
                               std::span<const double> scores, const Model& model, const Execution& exec) {
    const auto free = theta_hat.free_indices();
    const auto p = static_cast<Eigen::Index>(free.size());
    StandardErrors se;
    se.values.assign(free.size(), kNaN);
    se.covariance = Eigen::MatrixXd::Constant(p, p, kNaN);
    if (p == 0) {
        se.method = StdErrorMethod::inverse_hessian;
        return se;
    }

    Eigen::MatrixXd hess(p, p);
    const auto x0 = theta_hat.free_values();
    ParameterVector theta = theta_hat;
    for (Eigen::Index c = 0; c < p; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const double h = 1e-5 * std::max(1.0, std::abs(x0[k]));
        auto x = x0;
        x[k] = x0[k] + h;
        theta.set_free_values(x);
        const auto gp = ll_gradient(data, scores, theta, model, exec);
        x[k] = x0[k] - h;
        theta.set_free_values(x);
        const auto gm = ll_gradient(data, scores, theta, model, exec);
        for (Eigen::Index r = 0; r < p; ++r) {
            hess(r, c) = (gp[static_cast<std::size_t>(r)] - gm[static_cast<std::size_t>(r)]) / (2.0 * h);
        }
    }
    const Eigen::MatrixXd info = -0.5 * (hess + hess.transpose());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(p, p);

    for (const auto method : {StdErrorMethod::inverse_hessian, StdErrorMethod::ridge}) {
        const Eigen::MatrixXd m = method == StdErrorMethod::ridge ? Eigen::MatrixXd(info + 1e-6 * id) : info;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success) continue;
        se.covariance = llt.solve(id);
        se.method = method;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double v = se.covariance(i, i);
            se.values[static_cast<std::size_t>(i)] = v > 0.0 ? std::sqrt(v) : kNaN;
        }
        return se;
    }
    se.method = StdErrorMethod::unavailable;
    return se;
}

std::string format_start_traces(const std::vector<StartSummary>& starts) {
    std::string out;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        const auto& st = starts[s];
        out += fmt::format("start {}: {} after {} iterations, LL = {:.6f}, |grad| = {:.3e}\n", s + 1,
                           optim::to_string(st.status), st.iterations, st.log_likelihood, st.gradient_norm);
        for (const auto& rec : st.trace) {
            out += fmt::format("  iter {:4d}  f = {:.10f}  |grad| = {:.3e}  step = {:.3e}\n", rec.iteration,
                               rec.value, rec.gradient_norm, rec.step);
        }
    }
    return out;
}

EstimationResult estimate(const ChoiceDataset& data, std::span<const double> scores, const ModelSpec& spec,
                          const EstimationOptions& options) {
    validate_model_spec(spec);
    check_covariates(spec, data.covariate_names);
    data.validate();
    if (data.observations.empty()) throw ValidationError("estimate: dataset has no observations");
    const Model model = Model::bind(spec, data);
    if (model.binds_latent() && scores.size() != data.respondents.size()) {
        throw ValidationError(fmt::format("model binds the latent construct but {} scores were given for {} respondents",
                                          scores.size(), data.respondents.size()));
    }
    if (!model.binds_latent() && !scores.empty()) {
        throw ValidationError("scores given but the model binds no latent term");
    }
    if (options.starts == 0) throw ValidationError("estimate: at least one start is required");

    const Execution exec{options.threads == 0 ? 1u : options.threads};
    const ParameterVector start = model.start_parameters(options.iv_start);
    auto [lower, upper] = bounds_for(start, options.iv_lower, options.iv_upper);
    optim::Options opts;
    opts.max_iterations = options.max_iterations;
    opts.gradient_tolerance = options.gradient_tolerance;

    EstimationResult result;
    result.model_name = spec.name;
    result.observations = data.observations.size();
    result.respondents = data.respondents.size();

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> jitter(0.0, options.jitter);
    std::optional<optim::Result> best;
    const double scale = 1.0 / static_cast<double>(data.observations.size());
    std::size_t total_evaluations = 0;
    for (std::size_t s = 0; s < options.starts; ++s) {
        std::vector<double> x0 = start.free_values();
        if (s > 0) {
            for (std::size_t i = 0; i < x0.size(); ++i) {
                x0[i] = std::clamp(x0[i] + jitter(rng), lower[i], upper[i]);
            }
        }
        Problem problem{data, scores, model, exec, start, scale};
        auto fit = optim::minimize_bfgs(std::ref(problem), x0, lower, upper, opts);
        total_evaluations += fit.evaluations;
        StartSummary summary;
        summary.start = x0;
        summary.status = fit.status;
        summary.iterations = fit.iterations;
        summary.log_likelihood = -fit.value / scale;
        summary.gradient_norm = fit.gradient_norm;
        summary.trace = fit.trace;
        result.starts.push_back(std::move(summary));
        if (fit.converged() && (!best || fit.value < best->value)) {
            best = std::move(fit);
            result.convergence.best_start = s;
        }
    }
    if (!best) {
        throw EstimationError("no start converged (" + std::to_string(options.starts) + " starts, max " +
                              std::to_string(options.max_iterations) + " iterations)\n" +
                              format_start_traces(result.starts));
    }

    result.theta_hat = start;
    result.theta_hat.set_free_values(best->x);
    result.convergence.status = best->status;
    result.convergence.iterations = best->iterations;
    result.convergence.evaluations = total_evaluations;
    result.convergence.gradient_norm = best->gradient_norm;
    const double ll_beta = log_likelihood(data, scores, result.theta_hat, model, exec);

    const auto se = standard_errors(result.theta_hat, data, scores, model, exec);
    result.se_method = se.method;
    result.covariance = se.covariance;
    result.std_errors.assign(result.theta_hat.size(), kNaN);
    result.t_stats.assign(result.theta_hat.size(), kNaN);
    const auto free = result.theta_hat.free_indices();
    for (std::size_t k = 0; k < free.size(); ++k) {
        result.std_errors[free[k]] = se.values[k];
        result.t_stats[free[k]] = result.theta_hat[free[k]].value / se.values[k];
    }
    if (se.method == StdErrorMethod::ridge) {
        result.warnings.push_back("negative Hessian not positive definite; standard errors use a 1e-6 ridge");
    } else if (se.method == StdErrorMethod::unavailable) {
        result.warnings.push_back("negative Hessian not positive definite; standard errors unavailable");
    }

    for (const std::size_t i : free) {
        const auto& p = result.theta_hat[i];
        if (p.kind != ParameterKind::inclusive_value) continue;
        IvCheck c;
        c.parameter = p.name;
        c.estimate = p.value;
        c.std_error = result.std_errors[i];
        c.z_zero = c.estimate / c.std_error;
        c.z_one = (c.estimate - 1.0) / c.std_error;
        c.in_unit_interval = c.estimate > 0.0 && c.estimate <= 1.0;
        c.consistent = c.z_zero > 1.96 && c.z_one < 1.96;
        if (std::abs(c.estimate - options.iv_lower) < 1e-9 || std::abs(c.estimate - options.iv_upper) < 1e-9) {
            result.warnings.push_back(p.name + " is at its search bound");
        }
        result.iv_checks.push_back(c);
    }

    if (options.benchmarks) {
        const auto b = benchmark_lls(data, spec, exec);
        result.fit = fit_statistics(ll_beta, b.ll_zero, b.ll_const);
        result.has_benchmarks = true;
    } else {
        result.fit.ll_beta = ll_beta;
        result.fit.ll_zero = result.fit.ll_const = result.fit.rho2 = result.fit.pseudo_rho2 = kNaN;
    }
    return result;
}

}  // namespace nlv
