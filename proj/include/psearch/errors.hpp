#pragma once

#include <stdexcept>
#include <string>

namespace psearch {

/// Base of every error thrown by the library. Each subclass maps onto one
/// of the CLI exit-code classes (config, input schema, runtime).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (bad k1, mismatched n-gram size, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An input record violates its schema. `field` names the offending field
/// and `line` is the 1-based line number when the record came from a file.
class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& message, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + message : message),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

/// Index construction failure: duplicate ids, inconsistent batches.
class BuildError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)) {}
};

/// A persisted index could not be read back (bad magic, version, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Network or remote failure, attributed to a shard when one is known.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int shard_id = -1)
      : Error(shard_id >= 0 ? "shard " + std::to_string(shard_id) + ": " + message : message),
        shard_id_(shard_id) {}

  int shard_id() const noexcept { return shard_id_; }

 private:
  int shard_id_;
};

}  // namespace psearch
