#pragma once

#include <stdexcept>
#include <string>

namespace gapkit {

// Precondition violated by the caller (bad range, empty input, length mismatch).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent experiment configuration (lambda/mode mismatch, invalid regime/scope pair).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A network whose parameters or loss left the finite float32 range.
class DivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric whose value is undefined for the given input (e.g. R^2 with constant labels).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace gapkit
