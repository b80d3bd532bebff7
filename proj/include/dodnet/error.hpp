#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dodnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or configuration files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Task id outside the registry.
class TaskError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a forward op or an objective that cannot be evaluated.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

/// A metric that is undefined for its inputs (e.g. Hausdorff on an empty mask).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary container. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace dodnet
