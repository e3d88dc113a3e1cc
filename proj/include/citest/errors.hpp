#pragma once

#include <stdexcept>
#include <string>

namespace citest {

// Bad user input or parameters (CLI exit code 2).
struct InvalidInputError : std::invalid_argument {
  explicit InvalidInputError(const std::string& msg)
      : std::invalid_argument(msg) {}
};

// The empirical variance of the product-of-residual summands collapsed, so
// no normalized statistic exists (CLI exit code 3).
struct DegenerateVarianceError : std::runtime_error {
  explicit DegenerateVarianceError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// An iterative fit (IRLS, bisection) failed to converge (CLI exit code 4).
struct ConvergenceError : std::runtime_error {
  explicit ConvergenceError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace citest
