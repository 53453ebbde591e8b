#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nsgp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A CSV cell could not be parsed. Rows are 1-based and count the header
/// line when one is present, so they match what a text editor shows.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("parse error at row " + std::to_string(row) + ", column " +
              std::to_string(column) + ": " + what),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class MissingColumn : public Error {
 public:
  using Error::Error;
};

class DegenerateColumn : public Error {
 public:
  using Error::Error;
};

class AllRestartsFailed : public Error {
 public:
  using Error::Error;
};

class SnapshotMismatch : public Error {
 public:
  using Error::Error;
};

class WrongKernel : public Error {
 public:
  using Error::Error;
};

}  // namespace nsgp
