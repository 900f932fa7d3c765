#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sitrec {

// Base class for every error raised by the library. Callers that only care
// about success/failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed records that contradict each other (dangling reply links etc).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unknown keys. The CLI maps this to exit 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values surfaced during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sitrec
