#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace volforge {

struct SimplexOptions {
    /// Converged when the largest vertex distance from the best vertex falls below this.
    double diameter_tol = 1e-8;
    /// Also converged when max f - min f over the simplex is at most
    /// value_tol * (1 + |best f|). 0 disables the test.
    double value_tol = 0.0;
    /// Iteration cap is `iterations_per_dim * dimension`.
    std::size_t iterations_per_dim = 500;
    /// Initial edge length along each coordinate axis.
    double initial_step = 0.1;
    /// Number of fresh restarts from the best point after convergence.
    std::size_t restarts = 1;
};

struct SimplexResult {
    std::vector<double> x;
    double value = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
    double diameter = 0.0;
    /// Best objective value after every iteration (non-increasing).
    std::vector<double> trace;
};

/// Deterministic Nelder-Mead minimiser (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5). Non-finite objective values are treated as +inf.
SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                          std::vector<double> start, const SimplexOptions& options = {});

}  // namespace volforge
