#pragma once

#include <stdexcept>
#include <string>

namespace gridsense {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can separate data problems from internal failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (case files, snapshots, plans).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Well-formed input that violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Singular or ill-conditioned numerics.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridsense
