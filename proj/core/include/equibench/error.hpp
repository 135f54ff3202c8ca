#pragma once

#include <stdexcept>
#include <string>

namespace equibench {

/// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or width disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (|beta| >= 1,
/// single-class AUC input, fraction too small to stratify, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a usage contract (non-scalar loss, flag unset, mismatched specs).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value; `field()` holds the dotted path of the key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Training produced a non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace equibench
