#pragma once

#include <stdexcept>
#include <string>

namespace obsopt {

/// Nonlinear or linear solver did not reach its tolerance.
class SolverFailure : public std::runtime_error {
public:
    explicit SolverFailure(const std::string& what, double residual = -1.0)
        : std::runtime_error(what), last_residual(residual) {}
    double last_residual;
};

/// Problem data violates an assumption (infeasible obstacle, bad bounds, ...).
class InvalidData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Coefficients fail the ellipticity check.
class InvalidCoefficients : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An oracle was asked about a regime it does not cover.
class OracleInapplicable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace obsopt
