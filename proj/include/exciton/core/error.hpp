#pragma once

#include <stdexcept>
#include <string>

namespace exlab {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or index ranges that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input that violates a documented precondition (bad rates, malformed files, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An algorithm that failed to converge or lost a numerical invariant.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace exlab
