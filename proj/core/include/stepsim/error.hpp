#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stepsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, std::size_t column, const std::string& what)
      : Error(format(source, line, column, what)),
        source_(std::move(source)),
        line_(line),
        column_(column) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& source, std::size_t line, std::size_t column,
                            const std::string& what) {
    std::string out = source.empty() ? std::string("<input>") : source;
    if (line > 0) {
      out += ":" + std::to_string(line);
      if (column > 0) out += ":" + std::to_string(column);
    }
    return out + ": " + what;
  }

  std::string source_;
  std::size_t line_;
  std::size_t column_;
};

/// A domain invariant does not hold (rating out of range, duplicate id, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inputs are well formed but the requested computation is undefined for them
/// (zero vectors, constant series, empty sets).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace stepsim
