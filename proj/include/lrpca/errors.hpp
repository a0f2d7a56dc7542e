#pragma once

#include <stdexcept>
#include <string>

namespace lrpca {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array shapes disagree; `axis()` names the first offending axis
/// ("batch", "channels", "height", "width", or an operation-specific name).
class ShapeError : public Error {
 public:
  ShapeError(const std::string& what, std::string axis)
      : Error(what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Invalid configuration value or usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, malformed, or inconsistent input data (files, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Serialized artifact with a bad tag, version, or config hash.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values, failed decompositions, and other numerical breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lrpca
