#pragma once

#include <stdexcept>
#include <string>

namespace fedperm {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid argument values (out-of-range sizes, divisibility violations, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// API misuse such as mixing ciphertexts from different keypairs.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad input data (non-finite values, empty datasets, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents; carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Inconsistent state across protocol participants (geometry or key mismatch).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A formula was evaluated outside its proven validity region; carries the
// violated bound.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, double bound)
      : Error(what + " (bound: " + std::to_string(bound) + ")"),
        bound_(bound) {}
  double bound() const { return bound_; }

 private:
  double bound_;
};

// Fixed-point values that cannot be represented or would overflow the
// plaintext ring.
class EncodingError : public Error {
 public:
  using Error::Error;
};

// Problems loading or validating run configuration files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedperm
