#pragma once

#include <stdexcept>
#include <string>

namespace regpoison {

// Base class for all library errors. Subclasses map to CLI exit codes:
// ConfigError -> 2, DataError -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent configuration (bad parameter values, unknown keys).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Malformed or unusable input data (parse failures, shape mismatches).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

// Numerical failure (singular systems, non-convergence).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what) {}
};

}  // namespace regpoison
