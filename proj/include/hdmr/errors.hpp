#pragma once

#include <stdexcept>
#include <string>

namespace hdmr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public Error {
  using Error::Error;
};
class ShapeError : public Error {
  using Error::Error;
};
class SizeError : public Error {
  using Error::Error;
};
class ConfigError : public Error {
  using Error::Error;
};
class NonFiniteError : public Error {
  using Error::Error;
};
class UndefinedStatisticsError : public Error {
  using Error::Error;
};
class MalformedDocumentError : public Error {
  using Error::Error;
};
class SchemaVersionError : public Error {
  using Error::Error;
};
class CoercivityError : public Error {
  using Error::Error;
};
class DegenerateModeError : public Error {
  using Error::Error;
};

/// CSV ingestion failure; `row()` is 1-based over data rows (0 for the header).
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

}  // namespace hdmr
