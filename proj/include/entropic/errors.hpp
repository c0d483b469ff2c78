#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace entropic {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value lies outside the domain where the formula is defined (Φ ≤ 0, ρ ≤ 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The caller passed inconsistent arguments (dimension mismatch, empty ensemble, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// An iterative or quadrature routine failed to reach its tolerance.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A step grid does not cover the bulk of the transition kernel.
class CoverageError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (stability bound violated, schema errors, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg), problems_{msg} {}
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (const auto& s : items) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> problems_;
};

/// A time integrator hit a state it cannot continue from.
class SolverError : public Error {
public:
    SolverError(const std::string& msg, std::size_t cell, double time)
        : Error(msg + " (cell " + std::to_string(cell) + ", t=" + std::to_string(time) + ")"),
          cell_(cell), time_(time) {}

    std::size_t cell() const noexcept { return cell_; }
    double time() const noexcept { return time_; }

private:
    std::size_t cell_;
    double time_;
};

/// A run finished but broke one of its conservation contracts.
class ConservationError : public Error {
public:
    using Error::Error;
};

} // namespace entropic
