#pragma once

#include <stdexcept>
#include <string>

namespace multiattn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or model dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf, empty inputs and other numeric contract violations.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the computation graph (non-scalar loss, bad node ids, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed datasets, out-of-vocabulary tokens, inconsistent records.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or file format problems (bad magic, version, checksum).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace multiattn
