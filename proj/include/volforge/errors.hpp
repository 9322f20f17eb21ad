#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace volforge {

/// Malformed or unusable input data (bad CSV rows, non-positive prices,
/// series too short for the requested split).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative fit stopped without meeting its convergence criterion.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::string diagnostics)
        : std::runtime_error(what + " [" + diagnostics + "]"), diagnostics_(std::move(diagnostics)) {}

    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

}  // namespace volforge
