#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spintrack {

/// Argument outside the domain of a formula (non-positive atom number,
/// zero detuning, undefined squeezing, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Truth integration produced a state that no longer satisfies the moment
/// invariants; usually means dt is too large.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, std::int64_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

/// Filter covariance lost positive semidefiniteness beyond tolerance.
class FilterDivergence : public std::runtime_error {
public:
    FilterDivergence(const std::string& what, std::int64_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

/// Too many trajectories of an ensemble failed.
class EnsembleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace spintrack
