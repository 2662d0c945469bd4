#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pirank {

/// Base of every error thrown by the library. The CLI maps subclasses to
/// exit codes (ConfigError -> 1, DataError/ParseError/NotFoundError -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration: unknown kinds, duplicate ids, bad parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that parses but violates an invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Syntax error with a location. `line` is 1-based for record files,
/// `column` is 1-based for single-line sources such as query patterns.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    std::string out = what;
    if (line > 0) out += " (line " + std::to_string(line);
    if (column > 0) out += (line > 0 ? ", column " : " (column ") + std::to_string(column);
    if (line > 0 || column > 0) out += ")";
    return out;
  }

  std::size_t line_;
  std::size_t column_;
};

}  // namespace pirank
