#pragma once

#include <stdexcept>
#include <string>

namespace eflow {

/// Malformed or inconsistent user configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A solver did not meet its numerical contract (CLI exit code 3).
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A smallness condition on the connectivity failed. Carries both sides of
/// the inequality `lhs < rhs` so callers can print the margin (exit code 4).
class ThresholdViolation : public std::domain_error {
public:
    ThresholdViolation(std::string condition, double lhs, double rhs)
        : std::domain_error(condition + " violated: " + std::to_string(lhs) +
                            " >= " + std::to_string(rhs)),
          condition_(std::move(condition)),
          lhs_(lhs),
          rhs_(rhs) {}

    [[nodiscard]] const std::string& condition() const noexcept { return condition_; }
    [[nodiscard]] double lhs() const noexcept { return lhs_; }
    [[nodiscard]] double rhs() const noexcept { return rhs_; }

private:
    std::string condition_;
    double lhs_;
    double rhs_;
};

}  // namespace eflow
