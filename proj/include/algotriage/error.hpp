#pragma once

#include <stdexcept>
#include <string>

namespace algotriage {

/// Base for every error the toolkit raises. `kind()` is a short stable tag
/// used in machine-readable CLI diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid configuration. Carries the offending field name.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
};

/// Input data is malformed or lacks a required column.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

/// An estimator cannot produce a result (rank deficiency, one cluster, ...).
class EstimationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "estimation"; }
};

}  // namespace algotriage
