#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medlink {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input row. Carries the 1-based line number of the offending row.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input that parses but violates a structural invariant (duplicate ids,
/// dangling references, inconsistent shapes).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or pipeline configuration, detected before any work runs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A split request that cannot satisfy its coverage invariant on the given data.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during optimisation (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace medlink
