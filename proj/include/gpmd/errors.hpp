#pragma once

#include <stdexcept>
#include <string>

namespace gpmd {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument refers to something outside the object's domain (unknown leaf, root vertex, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A configuration or constructor parameter is out of range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed or incomplete input data.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numeric routine failed; carries the residual at the point of failure.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace gpmd
