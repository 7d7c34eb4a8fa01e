#pragma once

#include <stdexcept>
#include <string>

namespace triplane {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, NaN losses, failed numerical preconditions.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, training or benchmark configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File-system and format errors.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace triplane
