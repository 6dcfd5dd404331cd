#pragma once

#include <stdexcept>
#include <string>

namespace sosync {

// Shape or size mismatch of a matrix/vector argument.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (non-unit axis,
// n < 2, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration (missing reference vector, missing
// perturbation entry, malformed JSON, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Problem size exceeds a documented limit (e.g. exhaustive cut enumeration).
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation whose answer is not unique / not defined at this input.
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure (divergence, refinement not converging).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sosync
