#pragma once

#include <stdexcept>
#include <string>

namespace mmfs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform for the named operation.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& op, const std::string& detail)
      : Error(op + ": " + detail), op_(op) {}

  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Invalid run or model configuration. Raised before any training starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent dataset contents.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmfs
