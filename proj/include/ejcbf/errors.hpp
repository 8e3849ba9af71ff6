#pragma once

#include <stdexcept>
#include <string>

namespace ejcbf {

/// Integration produced NaN/Inf; the experiment harness records this as a
/// diverged run instead of aborting.
struct NonFiniteState : std::runtime_error {
  explicit NonFiniteState(const std::string& what) : std::runtime_error(what) {}
};

/// Gram matrix stayed indefinite after the full jitter ladder.
struct CholeskyFailure : std::runtime_error {
  explicit CholeskyFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Requested sample count does not match the configured grid shape.
struct GridShapeMismatch : std::runtime_error {
  explicit GridShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// Posterior mean of G is singular at the query point; callers fall back to
/// the conservative branch rather than aborting.
struct SingularMeanG : std::runtime_error {
  explicit SingularMeanG(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ejcbf
