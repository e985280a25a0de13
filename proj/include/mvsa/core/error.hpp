#pragma once

#include <stdexcept>
#include <string>

namespace mvsa {

/// Invalid shapes, schema mismatches, bad model/dataset configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse (e.g. backward on a non-scalar, reusing a consumed tape).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incompatible file on disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure unrelated to file contents.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mvsa
