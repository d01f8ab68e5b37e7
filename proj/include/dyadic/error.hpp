#pragma once

#include <stdexcept>
#include <string>

namespace dyadic {

/// Malformed configuration or argument. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A model or tuning assumption does not hold for the requested run
/// (infeasible truncation interval, N h^d < 1, degenerate packing, ...).
/// The CLI maps this to exit code 3.
class AssumptionViolation : public std::runtime_error {
 public:
  explicit AssumptionViolation(const std::string& what) : std::runtime_error(what) {}
};

/// Successive quadrature refinements failed to agree within tolerance.
class QuadratureError : public std::runtime_error {
 public:
  explicit QuadratureError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dyadic
