#pragma once

#include <stdexcept>
#include <string>

namespace tracer {

/// Base of every error raised by the library. `exit_code()` maps the error
/// onto the CLI contract: 1 for validation problems, 2 for runtime failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

/// Bad parameters or configuration values.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed input file. The message carries file and line.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : ValidationError(where + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyProjectError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedArchitecture : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientNegatives : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tracer
