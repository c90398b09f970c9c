#pragma once

#include <stdexcept>
#include <string>

namespace mlcak {

// Exception hierarchy. The CLI maps these onto process exit codes:
// ConfigError/ParameterError/ShapeError/ContractError -> 2, IoError/ParseError -> 3,
// NumericalError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or run configuration; the message lists every violated constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content; messages carry the path and line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameters during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlcak
