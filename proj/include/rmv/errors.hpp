#pragma once

#include <stdexcept>
#include <string>

namespace rmv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Vector or matrix dimensions that do not agree with the domain or model.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite drift, diffusion or kernel evaluations and overflow.
class NumericalError : public Error {
public:
    using Error::Error;
};

// An iterative routine stopped without meeting its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Invalid user input: configs, model expressions, domain descriptions.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": dimension " + std::to_string(got) +
                             " does not match " + std::to_string(want));
    }
}

} // namespace rmv
