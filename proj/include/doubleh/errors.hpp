// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace doubleh {

/// Base of every error raised by the library. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes that do not conform.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace doubleh
