#pragma once

#include <stdexcept>
#include <string>

namespace urcl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

/// Structural disagreement between inputs (node counts, ids out of range, headers).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row, long column)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
        row_(row),
        column_(column) {}

  long row() const noexcept { return row_; }
  long column() const noexcept { return column_; }

 private:
  long row_;
  long column_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a precondition (shape mismatch, empty input where one is required).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace urcl
