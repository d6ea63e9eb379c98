#pragma once

#include <stdexcept>
#include <string>

namespace fusegen {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Bad configuration, bad input files, schema violations. CLI exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(message) {}
};

// Data-level problems: malformed records, schema mismatches between datasets.
class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error(message) {}
};

// Generation backend failures (transport, exhausted retries). CLI exit code 3.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& message) : Error(message) {}
};

// Internal invariant violations (NaN loss, broken normalization). CLI exit code 4.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& message) : Error(message) {}
};

}  // namespace fusegen
