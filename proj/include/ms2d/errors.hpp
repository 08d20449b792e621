#pragma once

#include <stdexcept>
#include <string>

namespace ms2d {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input or configuration violates a documented precondition.
struct ValidationError : Error {
    using Error::Error;
};

// Iterative solver failed to reach its tolerance.
struct ConvergenceError : Error {
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual(residual) {}
    double residual;
};

// Crystal is not a stable equilibrium (imaginary normal-mode frequency).
struct InstabilityError : Error {
    using Error::Error;
};

// Gate design precondition violated (mode participation, missing modes, ...).
struct DesignError : Error {
    using Error::Error;
};

struct OptimizationError : Error {
    using Error::Error;
};

// Fock-space truncation leaked too much population.
struct TruncationError : Error {
    using Error::Error;
};

struct FitError : Error {
    using Error::Error;
};

}  // namespace ms2d
