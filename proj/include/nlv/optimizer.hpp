#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace nlv::optim {

/// Objective to minimize: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct Options {
    std::size_t max_iterations = 500;
    double gradient_tolerance = 1e-6;  ///< on the Euclidean norm of the projected gradient
    std::size_t max_line_search = 60;
    double armijo = 1e-4;
    /// A failed line search counts as convergence when the projected gradient is
    /// already below this (rounding noise floor). 0 disables.
    double stall_tolerance = 0.0;
};

enum class Status { converged, max_iterations, line_search_failed, non_finite };

std::string to_string(Status s);

struct IterationRecord {
    std::size_t iteration = 0;
    double value = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;
};

struct Result {
    std::vector<double> x;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> gradient;
    double gradient_norm = std::numeric_limits<double>::quiet_NaN();
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    Status status = Status::max_iterations;
    std::vector<IterationRecord> trace;  ///< one record per accepted iterate, starting with x0

    bool converged() const { return status == Status::converged; }
};

/// Box-constrained quasi-Newton minimization (BFGS inverse-Hessian update,
/// projected backtracking Armijo search, active-set handling of bounds).
/// Empty `lower`/`upper` mean unbounded. Accepted steps never increase f beyond
/// rounding noise (1e-13 relative).
Result minimize_bfgs(const Objective& f, std::vector<double> x0, std::vector<double> lower,
                     std::vector<double> upper, const Options& options = {});

/// Norm of the gradient with components that push against an active bound removed.
double projected_gradient_norm(std::span<const double> x, std::span<const double> grad,
                               std::span<const double> lower, std::span<const double> upper);

}  // namespace nlv::optim
