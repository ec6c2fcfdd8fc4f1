#pragma once

#include <stdexcept>
#include <string>

namespace uasabi {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
  using Error::Error;
};
class DimensionMismatch : public Error {
  using Error::Error;
};
class UnsupportedDimension : public Error {
  using Error::Error;
};
class DomainError : public Error {
  using Error::Error;
};

class IllConditionedBasis : public Error {
 public:
  IllConditionedBasis(int degree, const std::string& what)
      : Error(what), degree_(degree) {}
  int degree() const { return degree_; }

 private:
  int degree_;
};

class InitializationFailure : public Error {
  using Error::Error;
};
class InsufficientChains : public Error {
  using Error::Error;
};
/// Raised when sampler diagnostics fail the convergence threshold.
class ConvergenceFailure : public Error {
  using Error::Error;
};

class EmptyPosterior : public Error {
  using Error::Error;
};
class EmptySet : public Error {
  using Error::Error;
};
class NumericalOverflow : public Error {
  using Error::Error;
};
class BudgetExhausted : public Error {
  using Error::Error;
};
class InsufficientData : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};
class SchemaError : public ConfigError {
  using ConfigError::ConfigError;
};
class IoError : public Error {
  using Error::Error;
};

}  // namespace uasabi
