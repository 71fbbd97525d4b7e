#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zsd {

/// Base of every error the engine raises. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration bound was violated. `field()` names the offending key.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::string field, const std::string& detail = {})
      : Error(detail.empty() ? "invalid config: " + field
                             : "invalid config: " + field + " (" + detail + ")"),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed input record.
class ParseError : public Error {
 public:
  ParseError(std::size_t line_no, const std::string& reason)
      : Error("line " + std::to_string(line_no) + ": " + reason),
        line_no_(line_no),
        reason_(reason) {}

  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_no_;
  std::string reason_;
};

/// Well-formed record that violates a domain invariant (e.g. entropy > 8).
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DegenerateData : public Error {
 public:
  using Error::Error;
};

/// Internal invariant broken between pipeline stages; aborts the run.
class ContractError : public Error {
 public:
  using Error::Error;
};

class JoinError : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

}  // namespace zsd
