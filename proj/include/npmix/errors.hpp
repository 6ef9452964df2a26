#ifndef NPMIX_ERRORS_HPP
#define NPMIX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace npmix {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-supplied argument, malformed input file, or inconsistent
// configuration. The CLI maps this to exit code 2.
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: negligible truncation mass, quadrature that fails to
// converge, a numerically singular linear system, NaN appearing in a density.
// The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A component estimate collapsed, e.g. a vanishing positive part after
// truncation of a signed expansion.
class DegenerateEstimateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace npmix

#endif  // NPMIX_ERRORS_HPP
