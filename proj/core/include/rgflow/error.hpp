#pragma once

#include <stdexcept>
#include <string>

namespace rgflow {

/// Invalid user-supplied configuration (bad activation string, unknown key, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A Gaussian expectation or recursion produced a non-finite value.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// The activation has an identically vanishing derivative where one is required.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rgflow
