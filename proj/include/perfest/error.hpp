#pragma once

#include <stdexcept>
#include <string>

namespace perfest {

// Base of every domain error raised by the library. The CLI maps these to
// exit code 1; UsageError maps to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A record, task line or config field failed validation. `field` names the
// offending field; `line` is 1-based, 0 when not file-backed.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": field '" + field + "': " + what
                       : "field '" + field + "': " + what),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

class DegenerateProbabilityError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class GroupingError : public Error {
 public:
  using Error::Error;
};

class EmptyProfileError : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class IncompatibleModelError : public Error {
 public:
  using Error::Error;
};

class LabelingError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

// Retryable failure talking to a remote service.
class TransportError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace perfest
