#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selep {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (empty specs, out-of-range knobs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A loss, gradient, or parameter became non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A referenced entity (block, partition, encoding) does not exist.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A parsed artifact is inconsistent with the database it is replayed on.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConversionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace selep
