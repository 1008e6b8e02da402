#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nlmarkov {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operands live on different grids or have incompatible sizes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A domain invariant was violated at construction or on input.
class InvariantViolation : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed (LP breakdown, exponential overflow, ODE step floor).
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::string diagnostics = {})
        : Error(what), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

/// A family lacks the derivative data an operation needs.
class UnsupportedFamily : public Error {
public:
    using Error::Error;
};

/// Propagator queried at a time that is not a partition node.
class NodeError : public Error {
public:
    using Error::Error;
};

/// Iterative refinement stopped without meeting its tolerance.
class NoConvergence : public Error {
public:
    NoConvergence(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Picard iteration of a mild equation failed to contract.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// The nonlinear fixed-point map did not contract even on the smallest window.
class WellPosednessFailure : public Error {
public:
    using Error::Error;
};

/// Invalid scenario configuration; `field()` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace nlmarkov
