#pragma once

#include <stdexcept>
#include <string>

namespace spex {

/// Bad or inconsistent input data (CSV parse failures, invariant violations).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (missing keys, out-of-range options).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Required upstream artifact is absent.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (non-convergence, singular system, degenerate likelihood).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spex
