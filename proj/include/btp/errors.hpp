#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace btp {

/// Invalid argument: nonpositive time, mismatched lattices, unsupported dimension.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration or usage problem (bad label, empty ensemble, non-Lipschitz a for Picard).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Problem too large for the dense storage it needs.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double achieved, std::vector<double> history = {})
        : std::runtime_error(what), achieved_(achieved), history_(std::move(history)) {}

    /// Best error estimate reached before giving up.
    double achieved() const noexcept { return achieved_; }
    /// Residual sequence for iterative methods (empty for quadrature).
    const std::vector<double>& history() const noexcept { return history_; }

private:
    double achieved_;
    std::vector<double> history_;
};

}  // namespace btp
