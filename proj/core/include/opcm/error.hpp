#pragma once

#include <stdexcept>
#include <string>

namespace opcm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, invariant violations, bad configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Text input that could not be parsed. Carries the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Event coordinates outside the sensor.
class BoundsError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Binary container with a bad header or a truncated payload.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical failure during estimation (degenerate geometry, non-finite objective, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace opcm
