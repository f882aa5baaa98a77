#include "nlv/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "nlv/error.hpp"

namespace nlv::optim {

std::string to_string(Status s) {
    switch (s) {
        case Status::converged: return "converged";
        case Status::max_iterations: return "max_iterations";
        case Status::line_search_failed: return "line_search_failed";
        case Status::non_finite: return "non_finite";
    }
    return "unknown";
}

namespace {

double lower_at(std::span<const double> lower, std::size_t i) {
    return lower.empty() ? -std::numeric_limits<double>::infinity() : lower[i];
}
double upper_at(std::span<const double> upper, std::size_t i) {
    return upper.empty() ? std::numeric_limits<double>::infinity() : upper[i];
}

bool blocked(double x, double g, double lo, double hi) { return (x <= lo && g > 0.0) || (x >= hi && g < 0.0); }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

double projected_gradient_norm(std::span<const double> x, std::span<const double> grad,
                               std::span<const double> lower, std::span<const double> upper) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (blocked(x[i], grad[i], lower_at(lower, i), upper_at(upper, i))) continue;
        s += grad[i] * grad[i];
    }
    return std::sqrt(s);
}

Result minimize_bfgs(const Objective& f, std::vector<double> x0, std::vector<double> lower,
                     std::vector<double> upper, const Options& options) {
    const std::size_t n = x0.size();
    if ((!lower.empty() && lower.size() != n) || (!upper.empty() && upper.size() != n)) {
        throw Error("optimizer bounds do not match the parameter dimension");
    }
    auto clamp = [&](std::vector<double>& x) {
        for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lower_at(lower, i), upper_at(upper, i));
    };

    Result r;
    r.x = std::move(x0);
    clamp(r.x);
    r.gradient.assign(n, 0.0);
    r.value = f(r.x, r.gradient);
    r.evaluations = 1;
    if (!std::isfinite(r.value)) {
        r.status = Status::non_finite;
        return r;
    }
    r.gradient_norm = projected_gradient_norm(r.x, r.gradient, lower, upper);
    r.trace.push_back({0, r.value, r.gradient_norm, 0.0});

    // Inverse Hessian approximation, row-major.
    std::vector<double> h(n * n, 0.0);
    auto reset_h = [&](double scale) {
        std::fill(h.begin(), h.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) h[i * n + i] = scale;
    };
    reset_h(1.0);
    bool scaled = false;
    std::size_t noise_steps = 0;

    std::vector<double> d(n), xt(n), gt(n), s(n), y(n), hy(n), fallback_x, fallback_g;
    std::vector<char> active(n);

    for (;;) {
        if (r.gradient_norm <= options.gradient_tolerance) {
            r.status = Status::converged;
            break;
        }
        if (r.iterations >= options.max_iterations) {
            r.status = Status::max_iterations;
            break;
        }

        for (std::size_t i = 0; i < n; ++i) {
            active[i] = blocked(r.x[i], r.gradient[i], lower_at(lower, i), upper_at(upper, i));
        }
        auto direction = [&] {
            for (std::size_t i = 0; i < n; ++i) {
                double v = 0.0;
                if (!active[i]) {
                    for (std::size_t j = 0; j < n; ++j) {
                        if (!active[j]) v -= h[i * n + j] * r.gradient[j];
                    }
                }
                d[i] = v;
            }
            return dot(d, r.gradient);
        };
        double slope = direction();
        if (!(slope < 0.0)) {
            reset_h(1.0);
            scaled = false;
            slope = direction();
        }

        double alpha = 1.0;
        bool accepted = false;
        bool have_fallback = false;
        double fallback_f = 0.0;
        double ft = 0.0;
        for (std::size_t ls = 0; ls < options.max_line_search; ++ls, alpha *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) xt[i] = r.x[i] + alpha * d[i];
            clamp(xt);
            for (std::size_t i = 0; i < n; ++i) s[i] = xt[i] - r.x[i];
            if (std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; })) break;
            ft = f(xt, gt);
            ++r.evaluations;
            if (!std::isfinite(ft)) continue;
            if (ft <= r.value + options.armijo * dot(r.gradient, s)) {
                accepted = true;
                break;
            }
            // Near the optimum f differences fall below rounding noise; accept a
            // step that keeps f within that noise and reduces the projected gradient.
            if (!have_fallback && ft <= r.value + 1e-13 * std::max(1.0, std::abs(r.value)) &&
                projected_gradient_norm(xt, gt, lower, upper) < r.gradient_norm) {
                have_fallback = true;
                fallback_f = ft;
                fallback_x = xt;
                fallback_g = gt;
            }
        }
        if (!accepted && have_fallback) {
            xt = fallback_x;
            gt = fallback_g;
            ft = fallback_f;
            for (std::size_t i = 0; i < n; ++i) s[i] = xt[i] - r.x[i];
            accepted = true;
        }
        // Repeated steps without a strict decrease mean no further progress is possible.
        if (accepted) {
            noise_steps = ft < r.value ? 0 : noise_steps + 1;
            if (noise_steps > 10) accepted = false;
        }
        if (!accepted) {
            r.status = r.gradient_norm <= options.stall_tolerance ? Status::converged : Status::line_search_failed;
            break;
        }

        for (std::size_t i = 0; i < n; ++i) y[i] = gt[i] - r.gradient[i];
        const double sy = dot(s, y);
        const double yy = dot(y, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * yy)) {
            if (!scaled) {
                reset_h(sy / yy);
                scaled = true;
            }
            for (std::size_t i = 0; i < n; ++i) {
                double v = 0.0;
                for (std::size_t j = 0; j < n; ++j) v += h[i * n + j] * y[j];
                hy[i] = v;
            }
            const double yhy = dot(y, hy);
            const double c1 = (sy + yhy) / (sy * sy);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    h[i * n + j] += c1 * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }

        const double step = std::sqrt(dot(s, s));
        r.x = xt;
        r.gradient = gt;
        r.value = ft;
        ++r.iterations;
        r.gradient_norm = projected_gradient_norm(r.x, r.gradient, lower, upper);
        r.trace.push_back({r.iterations, r.value, r.gradient_norm, step});
    }
    return r;
}

}  // namespace nlv::optim
