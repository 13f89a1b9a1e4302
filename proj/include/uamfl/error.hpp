#pragma once

#include <stdexcept>
#include <string>

namespace uamfl {

/// Invalid model, solver or training parameter supplied by the caller.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Quadrature, solver or training failure (non-convergence, NaN, divergence).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A Monte Carlo trial without a serving aircraft for the typical GBS.
class NoServingLink : public std::runtime_error {
public:
    NoServingLink() : std::runtime_error("no aircraft associated with the typical GBS") {}
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ParameterError(message);
    }
}

}  // namespace uamfl
