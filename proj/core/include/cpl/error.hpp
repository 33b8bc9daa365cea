#pragma once

#include <stdexcept>
#include <string>

namespace cpl {

// Root of every error the library throws. The category decides the CLI exit
// code (see tools/cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or violated precondition (empty set, sigma <= 0, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tensor / vector dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. a ForwardCache that does not belong to the parameters.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Operation needs a rival class but the bank has a single class.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient encountered.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (wrong magic, mismatched pairing, bad text).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File shorter than its header promises.
class LengthError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpl
