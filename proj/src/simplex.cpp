#include "volforge/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace volforge {
namespace {

struct Vertex {
    std::vector<double> x;
    double f;
};

double safe_eval(const std::function<double(std::span<const double>)>& objective, std::span<const double> x,
                 std::size_t& evaluations) {
    ++evaluations;
    const double f = objective(x);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
}

double diameter(const std::vector<Vertex>& simplex) {
    double d = 0.0;
    for (std::size_t v = 1; v < simplex.size(); ++v)
        for (std::size_t i = 0; i < simplex[0].x.size(); ++i)
            d = std::max(d, std::abs(simplex[v].x[i] - simplex[0].x[i]));
    return d;
}

void run_once(const std::function<double(std::span<const double>)>& objective, const SimplexOptions& options,
              SimplexResult& result) {
    const std::size_t n = result.x.size();
    std::vector<Vertex> simplex;
    simplex.reserve(n + 1);
    simplex.push_back({result.x, safe_eval(objective, result.x, result.evaluations)});
    for (std::size_t i = 0; i < n; ++i) {
        Vertex v{result.x, 0.0};
        v.x[i] += options.initial_step;
        v.f = safe_eval(objective, v.x, result.evaluations);
        simplex.push_back(std::move(v));
    }

    auto order = [&] {
        std::stable_sort(simplex.begin(), simplex.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    };
    auto along = [&](const std::vector<double>& centroid, const std::vector<double>& from, double coeff) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = centroid[i] + coeff * (from[i] - centroid[i]);
        return x;
    };

    const std::size_t max_iter = options.iterations_per_dim * std::max<std::size_t>(n, 1);
    std::size_t iter = 0;
    order();
    result.converged = false;
    while (iter < max_iter) {
        result.diameter = diameter(simplex);
        const double spread = simplex[n].f - simplex[0].f;
        const bool flat = options.value_tol > 0.0 && spread <= options.value_tol * (1.0 + std::abs(simplex[0].f));
        if (result.diameter < options.diameter_tol || flat) {
            result.converged = true;
            break;
        }
        ++iter;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v].x[i] / static_cast<double>(n);
        Vertex& worst = simplex[n];

        Vertex reflected{along(centroid, worst.x, -1.0), 0.0};
        reflected.f = safe_eval(objective, reflected.x, result.evaluations);
        if (reflected.f < simplex[0].f) {
            Vertex expanded{along(centroid, worst.x, -2.0), 0.0};
            expanded.f = safe_eval(objective, expanded.x, result.evaluations);
            worst = expanded.f < reflected.f ? std::move(expanded) : std::move(reflected);
        } else if (reflected.f < simplex[n - 1].f) {
            worst = std::move(reflected);
        } else {
            const bool outside = reflected.f < worst.f;
            Vertex contracted{along(centroid, outside ? reflected.x : worst.x, 0.5), 0.0};
            contracted.f = safe_eval(objective, contracted.x, result.evaluations);
            if (contracted.f < (outside ? reflected.f : worst.f)) {
                worst = std::move(contracted);
            } else {
                for (std::size_t v = 1; v <= n; ++v) {
                    for (std::size_t i = 0; i < n; ++i)
                        simplex[v].x[i] = simplex[0].x[i] + 0.5 * (simplex[v].x[i] - simplex[0].x[i]);
                    simplex[v].f = safe_eval(objective, simplex[v].x, result.evaluations);
                }
            }
        }
        order();
        result.trace.push_back(simplex[0].f);
    }
    if (!result.converged) result.diameter = diameter(simplex);
    result.iterations += iter;
    result.x = simplex[0].x;
    result.value = simplex[0].f;
}

}  // namespace

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                          std::vector<double> start, const SimplexOptions& options) {
    if (start.empty()) throw std::invalid_argument("nelder_mead: empty parameter vector");
    SimplexResult result;
    result.x = std::move(start);
    run_once(objective, options, result);
    for (std::size_t r = 0; r < options.restarts && result.converged; ++r) {
        const double before = result.value;
        run_once(objective, options, result);
        if (!(result.value < before)) break;
    }
    return result;
}

}  // namespace volforge
