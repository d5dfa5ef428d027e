#pragma once

#include <stdexcept>
#include <string>

namespace teformer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, training or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or strides that do not fit an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, unpairable or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values detected during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace teformer
