#pragma once

#include <stdexcept>
#include <string>

namespace edtn {

// Base for all toolkit errors. kind() feeds the CLI's machine-readable error JSON
// and selects the exit code (config/input errors vs numerical failures).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Malformed or out-of-range configuration / input data. CLI exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

// Mesh or partition violates a geometric precondition. CLI exit code 2.
class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& msg) : Error("geometry", msg) {}
};

// Mismatched vector/matrix sizes between caller and operator. CLI exit code 2.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error("dimension", msg) {}
};

// Frequency outside the admissible range required by a precondition. CLI exit code 2.
class FrequencyError : public Error {
 public:
  explicit FrequencyError(const std::string& msg) : Error("frequency", msg) {}
};

// Iterative solver failed to reach the requested tolerance. CLI exit code 3.
class SolverError : public Error {
 public:
  SolverError(const std::string& msg, int iterations, double residual)
      : Error("solver", msg), iterations(iterations), residual(residual) {}
  int iterations;
  double residual;
};

// Numerical failure outside the linear solver (stagnation, non-finite values). Exit 3.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

}  // namespace edtn
