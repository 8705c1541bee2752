#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bnav {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: a config value, a CLI argument, an inconsistent request.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Failure reading or writing a file.
class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : ValidationError("line " + std::to_string(line) + ": " + reason), line_(line) {}
  explicit ParseError(const std::string& reason) : ValidationError(reason), line_(0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NoSuchEdge : public Error {
 public:
  using Error::Error;
};

class UnknownNode : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class Unreachable : public Error {
 public:
  using Error::Error;
};

class GraphError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingGraph : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SpecInfeasible : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AllMasked : public Error {
 public:
  using Error::Error;
};

class InvalidRate : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyDataset : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInstruction : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyGraph : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class VariantMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace bnav
