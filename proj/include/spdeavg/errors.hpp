#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdeavg {

/// Argument outside the mathematical domain of an operation (negative time, k = 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Inconsistent or malformed configuration. `key()` carries the dotted key path when known.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what, std::string key = {})
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// An operation was called in a way its contract does not allow.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A non-finite value appeared while integrating.
class IntegratorBlowup : public std::runtime_error {
public:
    IntegratorBlowup(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A Monte Carlo drift estimate did not reach its required accuracy.
class EstimationQualityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace spdeavg
