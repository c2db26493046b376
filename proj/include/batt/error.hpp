#pragma once

#include <stdexcept>
#include <string>

namespace batt {

// Error taxonomy. Each kind maps to a distinct CLI exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed in-memory value (bad shape, label out of range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Parameter outside its documented domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

// On-disk bytes do not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Experiment configuration is unusable (schema, paths, impossible knobs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Optimization failed (divergence, non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Evaluation could not produce a metric.
class EvalError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure, always carries the offending path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace batt
