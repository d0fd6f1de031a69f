#pragma once

#include <stdexcept>
#include <string>

namespace iterseg {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or resolutions that do not fit together.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Invalid configuration values or unknown configuration keys.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Missing, unreadable or malformed input data.
class DataError : public Error {
  public:
    using Error::Error;
};

/// Malformed or incompatible checkpoint file.
class CheckpointError : public Error {
  public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

}  // namespace iterseg
