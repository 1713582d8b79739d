#pragma once

#include <stdexcept>
#include <string>

namespace dfss {

// Base of every error the library throws. The CLI maps the concrete kinds
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition: bad argument, wrong mode, epsilon out of range.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Tensor extents that do not line up.
class ShapeError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// Backward requested without a cached forward pass.
class TapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or inconsistent file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfss
