#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msd {

/// Broad failure classes; the CLI maps them onto exit codes 1 and 2.
enum class ErrorKind {
  validation,  // bad input: syntax, unbound names, out-of-range arguments
  numeric,     // computation failed: explosion, non-convergence, lost rank
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorKind::validation, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message)
      : Error(ErrorKind::numeric, message) {}
};

class SyntaxError : public ValidationError {
 public:
  SyntaxError(std::size_t offset, const std::string& message)
      : ValidationError("syntax error at offset " + std::to_string(offset) + ": " + message),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Raised when a coefficient cannot be evaluated (log of a non-positive
/// number, division by zero, non-finite result, ...).
class DomainError : public ValidationError {
 public:
  DomainError(std::string subexpression, const std::string& message)
      : ValidationError("domain error in " + subexpression + ": " + message),
        subexpression_(std::move(subexpression)) {}

  const std::string& subexpression() const noexcept { return subexpression_; }

 private:
  std::string subexpression_;
};

}  // namespace msd
