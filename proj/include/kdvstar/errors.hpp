#pragma once

#include <stdexcept>
#include <string>

namespace kdvstar {

// Bad input: config file, parameters, mesh, initial-data spec. CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure: factorization, Picard, CG, NaN. CLI exit code 3.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation refused because of the criticality regime. CLI exit code 4.
struct RegimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kdvstar
