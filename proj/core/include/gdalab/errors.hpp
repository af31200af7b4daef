#pragma once

#include <stdexcept>
#include <string>

namespace gdalab {

/// Operand shapes do not agree (e.g. W is not k x d for the instance).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value is outside its documented range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A closed-form expression was evaluated outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// sigma_min(J0) is zero, so the lower singular-value assumption cannot be
/// verified.
class DegenerateJacobianError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dense numerical routine did not converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gdalab
