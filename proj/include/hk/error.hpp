#pragma once

#include <stdexcept>
#include <string>

namespace hk {

/// Input file could not be parsed under its declared format.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Data violates a structural invariant (degenerate triangle, wrong length, off-sphere vertex...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mesh topology the operation does not handle (open boundary edges, isolated vertices).
class TopologyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Bad caller-supplied argument (k too large, negative bandwidth...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Iterative method failed: non-convergence, divergence, singular factorization.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hk
