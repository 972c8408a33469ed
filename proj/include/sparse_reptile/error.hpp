#pragma once

#include <stdexcept>
#include <string>

namespace sparse_reptile {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or congruence mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a public operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on object state (e.g. nonzeros off a sparsity mask).
class InvariantError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary input (checkpoints, PGM images).
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, Malformed };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace sparse_reptile
